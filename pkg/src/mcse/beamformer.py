"""MVDR beamforming on the delay-aligned subband signals.

Noise statistics come from the lowest-energy 20% of frames; a small
diagonal loading keeps every per-bin covariance invertible even with
duplicated or failed-channel-reduced inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .array import SourceLocation
from .errors import EnhancementError, ShapeMismatchError
from .filterbank import Spectrogram

DIAGONAL_LOADING = 1e-3
NOISE_FRAME_FRACTION = 0.2


@dataclass
class NoiseCovariance:
    matrices: np.ndarray  # (F, M, M) complex Hermitian
    frame_mask: np.ndarray  # bool per frame, True = used as noise

    @property
    def channel_count(self) -> int:
        return self.matrices.shape[1]


@dataclass
class BeamformerWeights:
    weights: np.ndarray  # (F, M) complex
    steering: np.ndarray  # (F, M) complex, the constraint direction


def noise_frame_mask(spec: Spectrogram, fraction: float = NOISE_FRAME_FRACTION) -> np.ndarray:
    """Frames whose broadband log-energy falls in the lowest ``fraction``."""
    energy = np.sum(np.abs(spec.coeffs) ** 2, axis=(0, 2))  # per frame
    n = len(energy)
    k = max(1, int(np.ceil(fraction * n)))
    order = np.argsort(energy, kind="stable")
    mask = np.zeros(n, dtype=bool)
    mask[order[:k]] = True
    return mask


def estimate_noise_covariance(
    spec: Spectrogram,
    frame_mask: np.ndarray | None = None,
    loading: float = DIAGONAL_LOADING,
) -> NoiseCovariance:
    """Average outer products over noise frames, plus diagonal loading.

    Per bin: R = mean_t x x^H + loading * (tr(R)/M) * I.
    """
    if frame_mask is None:
        frame_mask = noise_frame_mask(spec)
    if not np.any(frame_mask):
        raise EnhancementError("no noise frames selected")
    X = spec.coeffs[:, frame_mask, :]  # (M, Tn, F)
    M = X.shape[0]
    # (F, M, M): mean over noise frames of x x^H
    R = np.einsum("mtf,ntf->fmn", X, np.conj(X)) / X.shape[1]
    trace = np.real(np.einsum("fmm->f", R))
    eye = np.eye(M)
    R = R + (loading * np.maximum(trace, 1e-30) / M)[:, None, None] * eye
    return NoiseCovariance(matrices=R, frame_mask=frame_mask)


def steering_vector(loc: SourceLocation, freqs: np.ndarray) -> np.ndarray:
    """Plane-wave steering vector d(f, i) = exp(-j 2 pi f tau_i), shape (F, M)."""
    return np.exp(-2j * np.pi * np.outer(freqs, loc.delays))


def mvdr_weights(cov: NoiseCovariance, steering: np.ndarray) -> BeamformerWeights:
    """Closed-form MVDR: w = R^-1 d / (d^H R^-1 d) per bin."""
    if steering.shape != cov.matrices.shape[:2]:
        raise ShapeMismatchError(
            f"steering shape {steering.shape} vs covariance {cov.matrices.shape}"
        )
    try:
        Rinv_d = np.linalg.solve(cov.matrices, steering[..., None])[..., 0]  # (F, M)
    except np.linalg.LinAlgError as exc:
        raise EnhancementError(f"singular noise covariance: {exc}") from exc
    denom = np.einsum("fm,fm->f", np.conj(steering), Rinv_d)
    w = Rinv_d / denom[:, None]
    return BeamformerWeights(weights=w, steering=steering)


def das_weights(steering: np.ndarray) -> BeamformerWeights:
    """Delay-and-sum: w = d / M, distortionless for unit-modulus d."""
    M = steering.shape[1]
    return BeamformerWeights(weights=steering / M, steering=steering)


def apply_beamformer(spec: Spectrogram, bf: BeamformerWeights) -> Spectrogram:
    """Y(t, f) = w(f)^H x(t, f); returns a single-channel spectrogram."""
    if bf.weights.shape[1] != spec.channel_count:
        raise ShapeMismatchError(
            f"{bf.weights.shape[1]} weights for {spec.channel_count} channels"
        )
    y = np.einsum("fm,mtf->tf", np.conj(bf.weights), spec.coeffs)
    return Spectrogram(y[None], spec.config, spec.sample_rate, spec.n_samples)
