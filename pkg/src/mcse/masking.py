"""MSC- and PDM-based time-frequency masking.

The magnitude-squared coherence mask suppresses diffuse noise; the
phase-difference mask suppresses directional interference away from the
steering direction.  Both are averaged over microphone pairs and applied
multiplicatively to the beamformer output.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EnhancementError, ShapeMismatchError
from .filterbank import Spectrogram

WELCH_HALFWIDTH = 4  # frames each side; 2K+1 = 9-frame sliding average
DEFAULT_FLOOR = 0.05

ALPHA_BASE = 0.4
ALPHA_SLOPE = 0.3


@dataclass
class CrossSpectra:
    """Welch-averaged cross and auto spectral densities per T-F bin."""

    s_xy: np.ndarray  # (P, T, F) complex
    s_xx: np.ndarray  # (C, T, F) real >= 0
    pairs: list[tuple[int, int]]  # (i, j) channel indices, i < j
    channels: list[int]  # channel index -> row of s_xx


@dataclass
class Mask:
    gains: np.ndarray  # (T, F) in [0, 1]

    def __post_init__(self) -> None:
        self.gains = np.asarray(self.gains, dtype=np.float64)
        if not np.all(np.isfinite(self.gains)):
            raise EnhancementError("mask gains must be finite")
        if np.any(self.gains < 0) or np.any(self.gains > 1):
            raise EnhancementError("mask gains must lie in [0, 1]")


@dataclass
class PdmField:
    """Mean absolute inter-channel phase difference per T-F bin, in [0, pi]."""

    values: np.ndarray  # (T, F) radians
    freqs: np.ndarray  # (F,) Hz


def _sliding_mean(x: np.ndarray, halfwidth: int, axis: int) -> np.ndarray:
    """Centered moving average, edges truncated and renormalized by count."""
    if halfwidth == 0:
        return x.copy()
    n = x.shape[axis]
    x = np.moveaxis(x, axis, 0)
    csum = np.cumsum(x, axis=0)
    zeros = np.zeros_like(csum[:1])
    csum = np.concatenate([zeros, csum], axis=0)
    hi = np.minimum(np.arange(n) + halfwidth + 1, n)
    lo = np.maximum(np.arange(n) - halfwidth, 0)
    out = (csum[hi] - csum[lo]) / (hi - lo).reshape((-1,) + (1,) * (x.ndim - 1))
    return np.moveaxis(out, 0, axis)


def welch_cross_spectra(
    aligned: Spectrogram,
    included: Sequence[int] | None = None,
    halfwidth: int = WELCH_HALFWIDTH,
) -> CrossSpectra:
    """Sliding-window Welch estimate of cross/auto spectra across frames."""
    channels = sorted(included) if included is not None else list(range(aligned.channel_count))
    if len(channels) < 2:
        raise EnhancementError("need at least 2 included channels")
    X = aligned.coeffs[channels]  # (C, T, F)
    pairs = [
        (channels[a], channels[b])
        for a in range(len(channels))
        for b in range(a + 1, len(channels))
    ]
    s_xx = _sliding_mean(np.abs(X) ** 2, halfwidth, axis=1)
    raw_xy = np.stack(
        [
            X[channels.index(i)] * np.conj(X[channels.index(j)])
            for (i, j) in pairs
        ]
    )
    s_xy = _sliding_mean(raw_xy, halfwidth, axis=1)
    return CrossSpectra(s_xy=s_xy, s_xx=s_xx, pairs=pairs, channels=channels)


def msc(cross: CrossSpectra) -> Mask:
    """Pair-averaged magnitude-squared coherence, |S_xy|^2 / (S_xx S_yy)."""
    num = np.abs(cross.s_xy) ** 2
    coh = np.empty_like(num)
    for p, (i, j) in enumerate(cross.pairs):
        den = cross.s_xx[cross.channels.index(i)] * cross.s_xx[cross.channels.index(j)]
        coh[p] = np.divide(num[p], den, out=np.zeros_like(num[p]), where=den > 0)
    return Mask(np.clip(coh.mean(axis=0), 0.0, 1.0))


def pdm(
    aligned: Spectrogram,
    included: Sequence[int] | None = None,
    calibration=None,
) -> PdmField:
    """Mean absolute pairwise phase difference of the (calibrated) aligned channels.

    ``calibration`` may be a single filter or a sequence of filters whose
    phases are compensated before the phase differences are taken.
    """
    if calibration is not None:
        from .calibration import compensate

        aligned = compensate(aligned, calibration)
    channels = sorted(included) if included is not None else list(range(aligned.channel_count))
    if len(channels) < 2:
        raise EnhancementError("need at least 2 included channels")
    X = aligned.coeffs[channels]
    acc = np.zeros(X.shape[1:])
    count = 0
    for a in range(len(channels)):
        for b in range(a + 1, len(channels)):
            acc += np.abs(np.angle(X[a] * np.conj(X[b])))
            count += 1
    return PdmField(values=acc / count, freqs=aligned.freqs)


def alpha_bias(bin_freq, sample_rate: float):
    """Frequency-dependent bias of the PDM nonlinearity: 0.4 + 0.3 f / fs."""
    return ALPHA_BASE + ALPHA_SLOPE * np.asarray(bin_freq, dtype=np.float64) / sample_rate


def pdm_mask(field: PdmField, sample_rate: float) -> Mask:
    """Map PDM values to gains: min(1, 1 - tanh(W_P - alpha(f)))."""
    alpha = alpha_bias(field.freqs, sample_rate)
    return Mask(np.minimum(1.0, 1.0 - np.tanh(field.values - alpha)))


def combine_and_apply(
    beamformed: Spectrogram,
    msc_mask: Mask | None,
    pdm_mask: Mask | None,
    floor: float = DEFAULT_FLOOR,
) -> Spectrogram:
    """Multiply the beamformer output by max(floor, MSC * PDM).

    Either mask may be None (treated as all-ones) to realize the
    MSC-only / PDM-only / MSC+PDM variants.
    """
    if not 0.0 <= floor < 1.0:
        raise EnhancementError(f"floor must be in [0, 1), got {floor}")
    shape = beamformed.coeffs.shape[1:]
    gain = np.ones(shape)
    for mask in (msc_mask, pdm_mask):
        if mask is None:
            continue
        if mask.gains.shape != shape:
            raise ShapeMismatchError(
                f"mask shape {mask.gains.shape} vs spectrogram {shape}"
            )
        gain = gain * mask.gains
    gain = np.maximum(gain, floor)
    return Spectrogram(
        beamformed.coeffs * gain,
        beamformed.config,
        beamformed.sample_rate,
        beamformed.n_samples,
    )


# -- optional dumps -------------------------------------------------------

def dump_mask(mask: Mask, path: str | Path) -> None:
    """Binary dump: int32 LE {frames, bins} header + float32 LE gains."""
    T, F = mask.gains.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<2i", T, F))
        fh.write(mask.gains.astype("<f4").tobytes())


def load_mask(path: str | Path) -> Mask:
    with open(path, "rb") as fh:
        T, F = struct.unpack("<2i", fh.read(8))
        gains = np.frombuffer(fh.read(), dtype="<f4").reshape(T, F)
    return Mask(gains.astype(np.float64))


def write_mask_summary(rows: list[dict], path: str | Path) -> None:
    """CSV of per-utterance mean mask values."""
    fields = ["utterance", "mean_msc", "mean_pdm_gain"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in fields})
