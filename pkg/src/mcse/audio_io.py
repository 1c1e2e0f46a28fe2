"""Multichannel WAV reading/writing.

Channels may live in one N-channel RIFF file or in a set of mono files
(one per channel, e.g. the ``*.CH1.wav`` .. ``*.CH6.wav`` layout).  All
samples are held internally as float64 in [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.io import wavfile

from .errors import AudioIOError, ClippingError

_PCM16_SCALE = 32768.0
_MAX_PATTERN_CHANNELS = 64


@dataclass
class MultichannelWave:
    """Planar multichannel audio: ``samples[channel, sample]``."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if self.sample_rate <= 0:
            raise AudioIOError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise AudioIOError("samples contain NaN or Inf")

    @property
    def channel_count(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate


def _read_mono_or_multi(path: Path) -> tuple[int, np.ndarray]:
    """Read one WAV file as float64 planar (channels, samples)."""
    if not path.exists():
        raise AudioIOError(f"missing file: {path}")
    try:
        rate, data = wavfile.read(str(path))
    except ValueError as exc:
        raise AudioIOError(f"unsupported encoding in {path}: {exc}") from exc
    if data.dtype == np.int16:
        x = data.astype(np.float64) / _PCM16_SCALE
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(np.float64)
    else:
        raise AudioIOError(f"unsupported sample dtype {data.dtype} in {path}")
    if x.ndim == 1:
        x = x[np.newaxis, :]
    else:
        x = x.T  # wavfile gives (samples, channels)
    return int(rate), x


def expand_channel_pattern(pattern: str) -> list[Path]:
    """Expand a ``{n}`` channel pattern into the existing file list (n = 1, 2, ...)."""
    paths: list[Path] = []
    for n in range(1, _MAX_PATTERN_CHANNELS + 1):
        p = Path(pattern.format(n=n))
        if not p.exists():
            break
        paths.append(p)
    if not paths:
        raise AudioIOError(f"pattern {pattern!r} matched no files")
    return paths


def read_multichannel(source: str | Path | Sequence[str | Path]) -> MultichannelWave:
    """Assemble a wave from one multichannel file, a channel-file list, or a ``{n}`` pattern."""
    if isinstance(source, (str, Path)):
        s = str(source)
        if "{n}" in s:
            paths = expand_channel_pattern(s)
        else:
            rate, x = _read_mono_or_multi(Path(s))
            return MultichannelWave(x, rate)
    else:
        paths = [Path(p) for p in source]
        if not paths:
            raise AudioIOError("empty channel file list")

    rates, chans = [], []
    for p in paths:
        rate, x = _read_mono_or_multi(p)
        if x.shape[0] != 1:
            raise AudioIOError(f"expected mono channel file, got {x.shape[0]} channels: {p}")
        rates.append(rate)
        chans.append(x[0])
    if len(set(rates)) > 1:
        raise AudioIOError(f"sample-rate mismatch across channel files: {sorted(set(rates))}")
    lengths = {len(c) for c in chans}
    if len(lengths) > 1:
        raise AudioIOError(f"length mismatch across channel files: {sorted(lengths)}")
    return MultichannelWave(np.stack(chans), rates[0])


def write_wave(wave: MultichannelWave, path: str | Path, encoding: str = "float32") -> None:
    """Write a wave as PCM16 or IEEE float32. PCM16 requires |x| <= 1."""
    path = Path(path)
    data = wave.samples.T  # (samples, channels) for wavfile
    if data.shape[1] == 1:
        data = data[:, 0]
    if encoding == "float32":
        out = data.astype(np.float32)
    elif encoding == "pcm16":
        peak = np.max(np.abs(data)) if data.size else 0.0
        if peak > 1.0:
            raise ClippingError(f"peak amplitude {peak:.4g} exceeds full scale for pcm16")
        out = np.clip(np.round(data * _PCM16_SCALE), -32768, 32767).astype(np.int16)
    else:
        raise AudioIOError(f"unknown encoding {encoding!r}")
    try:
        wavfile.write(str(path), wave.sample_rate, out)
    except OSError as exc:
        raise AudioIOError(f"cannot write {path}: {exc}") from exc
