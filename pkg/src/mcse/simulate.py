"""Synthetic multichannel scene generation.

Point sources are rendered with exact fractional delays (full-band FFT
phase ramps) and 1/r attenuation; the diffuse field is a superposition
of equal-power plane waves from quasi-uniform directions on the sphere,
whose inter-microphone coherence converges to sinc(2 pi f d / c).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.fft import next_fast_len

from .array import ArrayGeometry
from .audio_io import MultichannelWave
from .errors import EnhancementError

DIFFUSE_DIRECTIONS = 256


@dataclass
class Interferer:
    signal: np.ndarray
    position: np.ndarray
    snr_db: float  # target-to-interferer ratio at channel 0


@dataclass
class SceneSpec:
    geometry: ArrayGeometry
    source_signal: np.ndarray
    source_position: np.ndarray
    sample_rate: int
    diffuse_snr_db: Optional[float] = None  # None = no diffuse noise
    interferer: Optional[Interferer] = None
    sensor_phase_offsets: Optional[np.ndarray] = None  # (C,) or (C, bins)
    seed: int = 0
    n_diffuse_directions: int = DIFFUSE_DIRECTIONS


@dataclass
class Scene:
    mixture: MultichannelWave
    target_images: MultichannelWave
    noise_images: MultichannelWave


def fractional_delay(x: np.ndarray, delay_samples: float, pad: int | None = None) -> np.ndarray:
    """Delay a signal by a (fractional) number of samples via an FFT phase ramp."""
    n = len(x)
    if pad is None:
        pad = int(np.ceil(abs(delay_samples))) + 1
    m = next_fast_len(n + 2 * pad)
    X = np.fft.rfft(x, m)
    freqs = np.fft.rfftfreq(m)
    y = np.fft.irfft(X * np.exp(-2j * np.pi * freqs * delay_samples), m)
    return y[:n]


def _apply_phase_offset(x: np.ndarray, phase, sample_rate: int, fft_size: int = 1024) -> np.ndarray:
    """All-pass filter the signal with the given phase response.

    ``phase`` is a scalar (frequency-constant) or a per-bin profile at the
    STFT bin frequencies, interpolated over the full band.  DC and Nyquist
    keep zero phase so the output stays real.
    """
    n = len(x)
    X = np.fft.rfft(x)
    f = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    if np.isscalar(phase) or np.ndim(phase) == 0:
        prof = np.full(len(f), float(phase))
    else:
        bin_freqs = np.arange(len(phase)) * sample_rate / fft_size
        prof = np.interp(f, bin_freqs, np.asarray(phase, dtype=np.float64))
    prof[0] = 0.0
    if n % 2 == 0:
        prof[-1] = 0.0
    return np.fft.irfft(X * np.exp(1j * prof), n)


def _render_point_source(
    signal: np.ndarray, position: np.ndarray, geometry: ArrayGeometry, sample_rate: int
) -> np.ndarray:
    """Per-mic images of a point source: 1/r attenuation + propagation delay."""
    position = np.asarray(position, dtype=np.float64)
    dists = np.linalg.norm(geometry.mic_positions - position, axis=1)
    if np.any(dists < 1e-6):
        raise EnhancementError("source position coincides with a microphone")
    out = np.empty((geometry.channel_count, len(signal)))
    for i, r in enumerate(dists):
        delay = r / geometry.speed_of_sound * sample_rate
        out[i] = fractional_delay(signal, delay) / r
    return out


def _fibonacci_sphere(n: int, rng: np.random.Generator) -> np.ndarray:
    """Quasi-uniform unit directions, randomly rotated (seeded)."""
    k = np.arange(n)
    z = 1.0 - (2.0 * k + 1.0) / n
    phi = np.pi * (1.0 + np.sqrt(5.0)) * k
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    dirs = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    # random rotation from a QR decomposition of a Gaussian matrix
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return dirs @ q.T


def _render_diffuse(
    n_samples: int,
    geometry: ArrayGeometry,
    sample_rate: int,
    n_directions: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sum of equal-power plane waves with independent white-noise sources."""
    dirs = _fibonacci_sphere(n_directions, rng)
    centered = geometry.mic_positions - geometry.centroid
    m = next_fast_len(n_samples + 16)  # headroom against circular wrap of small delays
    freqs = np.fft.rfftfreq(m)
    acc = np.zeros((geometry.channel_count, len(freqs)), dtype=np.complex128)
    scale = 1.0 / np.sqrt(n_directions)
    for u in dirs:
        S = np.fft.rfft(rng.standard_normal(n_samples), m)
        # arrival-time offset of a plane wave from direction u
        delays = -(centered @ u) / geometry.speed_of_sound * sample_rate
        acc += S * np.exp(-2j * np.pi * np.outer(delays, freqs))
    out = np.fft.irfft(acc, m, axis=1)[:, :n_samples] * scale
    return out


def _power(x: np.ndarray) -> float:
    return float(np.mean(x**2))


def simulate_scene(spec: SceneSpec) -> Scene:
    """Render the scene; mixture = target images + noise images exactly."""
    rng = np.random.default_rng(spec.seed)
    signal = np.asarray(spec.source_signal, dtype=np.float64)
    target = _render_point_source(signal, spec.source_position, spec.geometry, spec.sample_rate)
    n = target.shape[1]
    noise = np.zeros_like(target)

    p_target = max(_power(target[0]), 1e-30)
    if spec.interferer is not None:
        img = _render_point_source(
            np.asarray(spec.interferer.signal, dtype=np.float64),
            np.asarray(spec.interferer.position, dtype=np.float64),
            spec.geometry,
            spec.sample_rate,
        )
        p_int = max(_power(img[0]), 1e-30)
        gain = np.sqrt(p_target / p_int * 10.0 ** (-spec.interferer.snr_db / 10.0))
        noise += gain * img
    if spec.diffuse_snr_db is not None and np.isfinite(spec.diffuse_snr_db):
        diff = _render_diffuse(
            n, spec.geometry, spec.sample_rate, spec.n_diffuse_directions, rng
        )
        p_diff = max(_power(diff[0]), 1e-30)
        gain = np.sqrt(p_target / p_diff * 10.0 ** (-spec.diffuse_snr_db / 10.0))
        noise += gain * diff

    mixture = target + noise
    if spec.sensor_phase_offsets is not None:
        offsets = np.asarray(spec.sensor_phase_offsets)
        mixture = np.stack(
            [
                _apply_phase_offset(mixture[i], offsets[i], spec.sample_rate)
                for i in range(mixture.shape[0])
            ]
        )
    rate = spec.sample_rate
    return Scene(
        mixture=MultichannelWave(mixture, rate),
        target_images=MultichannelWave(target, rate),
        noise_images=MultichannelWave(noise, rate),
    )


def diffuse_coherence_analytic(f: float, d: float, c: float = 343.0):
    """Inter-mic coherence of a spherically isotropic field: sinc(2 pi f d / c)."""
    x = 2.0 * np.pi * np.asarray(f, dtype=np.float64) * d / c
    return np.sinc(x / np.pi)


def burst_noise_source(
    n_samples: int,
    sample_rate: int,
    seed: int,
    burst_hz: float = 2.0,
    duty: float = 0.5,
    tilt: float = 0.9,
) -> np.ndarray:
    """Amplitude-modulated tilted noise with silent gaps; a speech-like test source."""
    from scipy.signal import lfilter

    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n_samples)
    # one-pole low-pass tilt concentrates energy at low frequencies
    x = lfilter([1.0], [1.0, -tilt], x)
    t = np.arange(n_samples) / sample_rate
    gate = (np.mod(t * burst_hz, 1.0) < duty).astype(np.float64)
    # 10 ms raised-cosine ramps to avoid clicks
    ramp = max(1, int(0.01 * sample_rate))
    kernel = np.hanning(2 * ramp + 1)
    kernel /= kernel.sum()
    gate = np.convolve(gate, kernel, mode="same")
    x *= gate
    peak = np.max(np.abs(x))
    return 0.5 * x / peak if peak > 0 else x
