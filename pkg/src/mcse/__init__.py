"""Multi-channel speech enhancement: beamforming, coherence/phase-difference
masking, and microphone phase self-calibration."""

from .audio_io import MultichannelWave, read_multichannel, write_wave
from .array import ArrayGeometry, SourceLocation, align, detect_failures, steering_delays, tablet_geometry
from .filterbank import Spectrogram, StftConfig, stft_analyze, stft_synthesize
from .pipeline import EnhancementConfig, enhance_utterance, run_batch

__all__ = [
    "ArrayGeometry",
    "EnhancementConfig",
    "MultichannelWave",
    "SourceLocation",
    "Spectrogram",
    "StftConfig",
    "align",
    "detect_failures",
    "enhance_utterance",
    "read_multichannel",
    "run_batch",
    "steering_delays",
    "stft_analyze",
    "stft_synthesize",
    "tablet_geometry",
    "write_wave",
]

__version__ = "0.1.0"
