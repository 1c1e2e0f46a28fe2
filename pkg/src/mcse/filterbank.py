"""STFT analysis and weighted overlap-add synthesis.

Default configuration is a 1024-sample sqrt-Hann window with 75% overlap
(hop 256) at 16 kHz, which satisfies the constant-overlap-add condition
and reconstructs the interior of the signal to machine precision.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .audio_io import MultichannelWave
from .errors import EnhancementError, ShapeMismatchError

COLA_TOLERANCE = 1e-8


def _hann_periodic(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


_WINDOWS = {
    "hann": _hann_periodic,
    "sqrt_hann": lambda n: np.sqrt(_hann_periodic(n)),
}


@dataclass(frozen=True)
class StftConfig:
    window_length: int = 1024
    hop: int = 256
    window: str = "sqrt_hann"
    fft_size: int = 1024

    def __post_init__(self) -> None:
        if self.hop <= 0 or self.hop > self.window_length:
            raise EnhancementError(f"hop must be in (0, window_length], got {self.hop}")
        if self.fft_size < self.window_length:
            raise EnhancementError("fft_size must be >= window_length")
        if self.window not in _WINDOWS:
            raise EnhancementError(f"unknown window {self.window!r}")
        dev = cola_deviation(self)
        if dev > COLA_TOLERANCE:
            raise EnhancementError(
                f"window/hop is not COLA: relative deviation {dev:.3g}"
            )

    @property
    def bins(self) -> int:
        return self.fft_size // 2 + 1

    def taper(self) -> np.ndarray:
        return _WINDOWS[self.window](self.window_length)


def cola_deviation(config: StftConfig) -> float:
    """Relative deviation of the analysis*synthesis overlap-add sum from constant."""
    w = _WINDOWS[config.window](config.window_length)
    prod = w * w
    # evaluate the periodic OLA sum over one hop period
    n_shift = math.ceil(config.window_length / config.hop)
    acc = np.zeros(config.hop)
    for k in range(n_shift):
        seg = prod[k * config.hop : (k + 1) * config.hop]
        acc[: len(seg)] += seg
    mean = acc.mean()
    if mean <= 0:
        return np.inf
    return float(np.max(np.abs(acc - mean)) / mean)


@dataclass
class Spectrogram:
    """One-sided complex STFT coefficients, indexed (channel, frame, bin)."""

    coeffs: np.ndarray
    config: StftConfig
    sample_rate: int
    n_samples: int | None = None

    def __post_init__(self) -> None:
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if self.coeffs.ndim != 3:
            raise ShapeMismatchError(f"coeffs must be 3-d, got shape {self.coeffs.shape}")
        if self.coeffs.shape[2] != self.config.bins:
            raise ShapeMismatchError(
                f"expected {self.config.bins} bins, got {self.coeffs.shape[2]}"
            )

    @property
    def channel_count(self) -> int:
        return self.coeffs.shape[0]

    @property
    def n_frames(self) -> int:
        return self.coeffs.shape[1]

    @property
    def bins(self) -> int:
        return self.coeffs.shape[2]

    @property
    def freqs(self) -> np.ndarray:
        """Center frequency of each bin in Hz."""
        return np.arange(self.bins) * self.sample_rate / self.config.fft_size

    def select_channels(self, idx) -> "Spectrogram":
        return Spectrogram(self.coeffs[np.asarray(idx)], self.config, self.sample_rate, self.n_samples)


def stft_analyze(wave: MultichannelWave, config: StftConfig | None = None) -> Spectrogram:
    """Analyze a wave into overlapping windowed frames.

    The signal is reflect-padded by half a window on both ends so that the
    frame time axis is aligned with the wave (frame t is centered near
    sample t*hop) and synthesis can recover the full original extent.
    """
    config = config or StftConfig()
    L, H = config.window_length, config.hop
    if wave.n_samples < L:
        raise EnhancementError(
            f"wave of {wave.n_samples} samples is shorter than one window ({L})"
        )
    pad = L // 2
    x = np.pad(wave.samples, ((0, 0), (pad, pad)), mode="reflect")
    total = x.shape[1]
    n_frames = 1 + math.ceil(max(0, total - L) / H)
    need = (n_frames - 1) * H + L
    if need > total:
        x = np.pad(x, ((0, 0), (0, need - total)))
    frames = np.lib.stride_tricks.sliding_window_view(x, L, axis=1)[:, ::H, :]
    coeffs = np.fft.rfft(frames * config.taper(), n=config.fft_size, axis=-1)
    return Spectrogram(coeffs, config, wave.sample_rate, n_samples=wave.n_samples)


def stft_synthesize(spec: Spectrogram) -> MultichannelWave:
    """Weighted overlap-add synthesis, inverse of :func:`stft_analyze`."""
    config = spec.config
    L, H = config.window_length, config.hop
    win = config.taper()
    pad = L // 2
    frames = np.fft.irfft(spec.coeffs, n=config.fft_size, axis=-1)[..., :L] * win
    C, T = frames.shape[0], frames.shape[1]
    out_len = (T - 1) * H + L
    y = np.zeros((C, out_len))
    den = np.zeros(out_len)
    wsq = win * win
    for t in range(T):
        y[:, t * H : t * H + L] += frames[:, t]
        den[t * H : t * H + L] += wsq
    y /= np.maximum(den, 1e-12)
    n = spec.n_samples if spec.n_samples is not None else out_len - 2 * pad
    return MultichannelWave(y[:, pad : pad + n], spec.sample_rate)


# -- optional binary dump -------------------------------------------------
# header: 6 x int32 LE {channels, frames, bins, sample_rate, window_length,
# hop}, then float32 LE (re, im) pairs in (channel, frame, bin) order.

def dump_spectrogram(spec: Spectrogram, path: str | Path) -> None:
    header = struct.pack(
        "<6i",
        spec.channel_count,
        spec.n_frames,
        spec.bins,
        spec.sample_rate,
        spec.config.window_length,
        spec.config.hop,
    )
    inter = np.empty(spec.coeffs.shape + (2,), dtype="<f4")
    inter[..., 0] = spec.coeffs.real
    inter[..., 1] = spec.coeffs.imag
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(inter.tobytes())


def load_spectrogram(path: str | Path) -> Spectrogram:
    with open(path, "rb") as fh:
        C, T, F, rate, wl, hop = struct.unpack("<6i", fh.read(24))
        raw = np.frombuffer(fh.read(), dtype="<f4").reshape(C, T, F, 2)
    fft_size = 2 * (F - 1)
    config = StftConfig(window_length=wl, hop=hop, fft_size=max(fft_size, wl))
    coeffs = raw[..., 0].astype(np.float64) + 1j * raw[..., 1].astype(np.float64)
    return Spectrogram(coeffs, config, rate)
