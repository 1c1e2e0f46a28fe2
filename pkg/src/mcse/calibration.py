"""Two-stage adaptive microphone phase self-calibration.

Per channel and bin, a transfer function is fit in the least-squares
sense between the delay-aligned channel and a delay-and-sum reference;
only its phase is kept and compensated.  Stage 1 pools high-SNR frames
of a training set; stage 2 refines per utterance on top of stage 1.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .array import ChannelStatus
from .errors import EnhancementError, ShapeMismatchError
from .filterbank import Spectrogram

STAGES = ("offline", "online")
EMPTY_BIN_RELATIVE_THRESHOLD = 1e-12
ENERGY_FLOOR = 1e-12


def _wrap_phase(phi: np.ndarray) -> np.ndarray:
    """Canonicalize to (-pi, pi]."""
    out = np.mod(phi + np.pi, 2.0 * np.pi) - np.pi
    out[out == -np.pi] = np.pi
    return out


@dataclass
class CalibrationFilter:
    """Unit-modulus (phase-only) per-channel, per-bin correction."""

    phase: np.ndarray  # (C, F) radians in (-pi, pi]
    stage: str = "offline"

    def __post_init__(self) -> None:
        self.phase = np.asarray(self.phase, dtype=np.float64)
        if self.stage not in STAGES:
            raise EnhancementError(f"stage must be one of {STAGES}")
        if not np.all(np.isfinite(self.phase)):
            raise EnhancementError("calibration phases must be finite")
        self.phase = _wrap_phase(self.phase)

    @classmethod
    def neutral(cls, channels: int, bins: int, stage: str = "offline") -> "CalibrationFilter":
        return cls(np.zeros((channels, bins)), stage)


@dataclass
class CalibrationAccumulator:
    numerator: np.ndarray  # (C, F) complex, sum of conj(X_i) * R
    denominator: np.ndarray  # (C, F) real, sum of |X_i|^2
    frames_used: int = 0

    @classmethod
    def zeros(cls, channels: int, bins: int) -> "CalibrationAccumulator":
        return cls(
            numerator=np.zeros((channels, bins), dtype=np.complex128),
            denominator=np.zeros((channels, bins)),
        )

    def merge(self, other: "CalibrationAccumulator") -> "CalibrationAccumulator":
        return CalibrationAccumulator(
            numerator=self.numerator + other.numerator,
            denominator=self.denominator + other.denominator,
            frames_used=self.frames_used + other.frames_used,
        )


def das_reference(aligned: Spectrogram, status: ChannelStatus | None = None) -> Spectrogram:
    """Delay-and-sum reference: mean of the aligned non-failed channels."""
    if status is not None:
        usable = status.usable
        if len(usable) == 0:
            raise EnhancementError("no usable channels for the reference")
        X = aligned.coeffs[usable]
    else:
        X = aligned.coeffs
    ref = X.mean(axis=0, keepdims=True)
    return Spectrogram(ref, aligned.config, aligned.sample_rate, aligned.n_samples)


def accumulate(
    acc: CalibrationAccumulator,
    aligned: Spectrogram,
    reference: Spectrogram,
    frame_select: np.ndarray | None = None,
) -> CalibrationAccumulator:
    """Add the selected frames' least-squares statistics to ``acc``.

    The running estimate numerator/denominator is the per-bin minimizer
    of sum_t |R - H X_i|^2.
    """
    if aligned.coeffs.shape[1:] != reference.coeffs.shape[1:]:
        raise ShapeMismatchError("aligned and reference frame/bin shapes differ")
    if acc.numerator.shape != (aligned.channel_count, aligned.bins):
        raise ShapeMismatchError("accumulator shape does not match spectrogram")
    if frame_select is None:
        frame_select = np.ones(aligned.n_frames, dtype=bool)
    X = aligned.coeffs[:, frame_select, :]
    R = reference.coeffs[0, frame_select, :]
    acc.numerator += np.sum(np.conj(X) * R[None], axis=1)
    acc.denominator += np.sum(np.abs(X) ** 2, axis=1)
    acc.frames_used += int(np.count_nonzero(frame_select))
    return acc


def finalize(acc: CalibrationAccumulator, stage: str = "offline") -> CalibrationFilter:
    """Extract phases; empty bins stay neutral; channel 0 is the phase gauge."""
    if acc.frames_used == 0 or not np.any(acc.denominator > 0):
        raise EnhancementError("empty calibration accumulator")
    threshold = EMPTY_BIN_RELATIVE_THRESHOLD * acc.denominator.max()
    good = acc.denominator > threshold
    phase = np.where(good, np.angle(np.where(good, acc.numerator, 1.0)), 0.0)
    # absolute phase is unidentifiable: pin channel 0 to zero at every bin
    phase = phase - phase[0:1]
    return CalibrationFilter(phase=phase, stage=stage)


def snr_per_frame(spec: Spectrogram, channel: int = 0, percentile: float = 10.0) -> np.ndarray:
    """Per-frame SNR in dB against the utterance's low-percentile energy floor."""
    if spec.n_frames < 10:
        raise EnhancementError("need at least 10 frames for the SNR estimate")
    energy = np.sum(np.abs(spec.coeffs[channel]) ** 2, axis=-1)
    noise = max(float(np.percentile(energy, percentile)), ENERGY_FLOOR)
    return 10.0 * np.log10(np.maximum(energy, ENERGY_FLOOR) / noise)


def compensate(
    spec: Spectrogram, filters: CalibrationFilter | Sequence[CalibrationFilter]
) -> Spectrogram:
    """Rotate each channel/bin by the summed filter phases (magnitudes unchanged)."""
    if isinstance(filters, CalibrationFilter):
        filters = [filters]
    total = np.zeros((spec.channel_count, spec.bins))
    for f in filters:
        if f.phase.shape != total.shape:
            raise ShapeMismatchError(
                f"filter shape {f.phase.shape} vs spectrogram ({spec.channel_count}, {spec.bins})"
            )
        total += f.phase
    rot = np.exp(1j * total)
    return Spectrogram(
        spec.coeffs * rot[:, None, :], spec.config, spec.sample_rate, spec.n_samples
    )


def offline_calibrate(
    aligned_utterances: Iterable[tuple[Spectrogram, ChannelStatus]],
) -> CalibrationFilter:
    """Stage 1: pool high-SNR frames (above the utterance median) over a training set."""
    acc: CalibrationAccumulator | None = None
    for aligned, status in aligned_utterances:
        if acc is None:
            acc = CalibrationAccumulator.zeros(aligned.channel_count, aligned.bins)
        ref = das_reference(aligned, status)
        snr = snr_per_frame(ref)
        select = snr > np.median(snr)
        accumulate(acc, aligned, ref, select)
    if acc is None or acc.frames_used == 0:
        raise EnhancementError("no frames selected for offline calibration")
    return finalize(acc, stage="offline")


def online_calibrate(
    aligned: Spectrogram,
    stage1: CalibrationFilter,
    status: ChannelStatus | None = None,
) -> CalibrationFilter:
    """Stage 2: one full-utterance pass after compensating the stage-1 phases."""
    compensated = compensate(aligned, stage1)
    total = float(np.sum(np.abs(compensated.coeffs) ** 2))
    if total <= ENERGY_FLOOR:
        warnings.warn("degenerate (all-silence) utterance; neutral online filter")
        return CalibrationFilter.neutral(aligned.channel_count, aligned.bins, "online")
    ref = das_reference(compensated, status)
    acc = CalibrationAccumulator.zeros(aligned.channel_count, aligned.bins)
    accumulate(acc, compensated, ref)
    return finalize(acc, stage="online")


# -- calibration file -----------------------------------------------------
# header: int32 LE {channels, bins, stage, sample_rate, fft_size} with
# stage 0 = offline, 1 = online; then float32 LE (channels, bins) phases.

def save_filter(
    filt: CalibrationFilter, path: str | Path, sample_rate: int, fft_size: int
) -> None:
    C, F = filt.phase.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<5i", C, F, STAGES.index(filt.stage), sample_rate, fft_size))
        fh.write(filt.phase.astype("<f4").tobytes())


def load_filter(path: str | Path) -> tuple[CalibrationFilter, int, int]:
    """Returns (filter, sample_rate, fft_size)."""
    with open(path, "rb") as fh:
        C, F, stage, rate, fft_size = struct.unpack("<5i", fh.read(20))
        phase = np.frombuffer(fh.read(), dtype="<f4").reshape(C, F).astype(np.float64)
    return CalibrationFilter(phase, STAGES[stage]), rate, fft_size
