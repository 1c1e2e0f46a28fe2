"""SRP-PHAT speaker localization over a candidate position grid."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .array import ArrayGeometry, ChannelStatus, SourceLocation, steering_delays
from .errors import EnhancementError
from .filterbank import Spectrogram


@dataclass
class SearchGrid:
    candidates: np.ndarray  # (N, 3) positions in meters

    def __post_init__(self) -> None:
        self.candidates = np.atleast_2d(np.asarray(self.candidates, dtype=np.float64))
        if self.candidates.size == 0 or self.candidates.shape[1] != 3:
            raise EnhancementError("grid candidates must be a non-empty (N, 3) array")


@dataclass(frozen=True)
class GridSpec:
    """Spherical shell grid centered on the array centroid."""

    azimuth_start_deg: float = -180.0
    azimuth_stop_deg: float = 180.0
    azimuth_step_deg: float = 5.0
    elevation_start_deg: float = -30.0
    elevation_stop_deg: float = 30.0
    elevation_step_deg: float = 10.0
    radius_m: float = 0.4


def build_grid(geometry: ArrayGeometry, spec: GridSpec | None = None) -> SearchGrid:
    spec = spec or GridSpec()
    az = np.arange(spec.azimuth_start_deg, spec.azimuth_stop_deg, spec.azimuth_step_deg)
    el = np.arange(
        spec.elevation_start_deg,
        spec.elevation_stop_deg + 0.5 * spec.elevation_step_deg,
        spec.elevation_step_deg,
    )
    azr, elr = np.meshgrid(np.deg2rad(az), np.deg2rad(el), indexing="ij")
    pts = spec.radius_m * np.stack(
        [np.cos(elr) * np.cos(azr), np.cos(elr) * np.sin(azr), np.sin(elr)], axis=-1
    ).reshape(-1, 3)
    return SearchGrid(pts + geometry.centroid)


def srp_phat_scores(
    spec: Spectrogram,
    geometry: ArrayGeometry,
    grid: SearchGrid,
    status: ChannelStatus | None = None,
) -> np.ndarray:
    """PHAT-weighted steered response power of every grid candidate.

    Cross spectra are phase-normalized per T-F bin and accumulated over
    the whole utterance, so the score is invariant to per-channel gain.
    """
    usable = (
        status.usable if status is not None else np.arange(spec.channel_count)
    )
    if len(usable) < 2:
        raise EnhancementError("SRP-PHAT needs at least 2 usable channels")
    X = spec.coeffs[usable]  # (M, T, F)
    M = len(usable)
    pairs = [(a, b) for a in range(M) for b in range(a + 1, M)]

    # time-summed PHAT cross spectra, one (F,) vector per pair
    G = np.empty((len(pairs), spec.bins), dtype=np.complex128)
    for p, (a, b) in enumerate(pairs):
        cross = X[a] * np.conj(X[b])
        mag = np.abs(cross)
        phat = np.divide(cross, mag, out=np.zeros_like(cross), where=mag > 1e-300)
        G[p] = phat.sum(axis=0)

    freqs = spec.freqs
    scores = np.empty(len(grid.candidates))
    for c, pos in enumerate(grid.candidates):
        tau = steering_delays(geometry, pos).delays[usable]
        # steering phase that undoes the pair's expected phase difference
        steer = np.exp(2j * np.pi * np.outer(tau, freqs))  # (M, F)
        total = 0.0
        for p, (a, b) in enumerate(pairs):
            total += float(np.sum(np.real(G[p] * steer[a] * np.conj(steer[b]))))
        scores[c] = total
    return scores


def srp_phat(
    spec: Spectrogram,
    geometry: ArrayGeometry,
    grid: SearchGrid,
    status: ChannelStatus | None = None,
    scores_csv: str | Path | None = None,
) -> SourceLocation:
    """Locate the source at the best-scoring grid candidate (ties -> lowest index)."""
    scores = srp_phat_scores(spec, geometry, grid, status)
    best = int(np.argmax(scores))  # argmax returns the first maximum
    if scores_csv is not None:
        dump_scores(grid, scores, scores_csv)
    return steering_delays(geometry, grid.candidates[best])


def dump_scores(grid: SearchGrid, scores: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["candidate", "x", "y", "z", "score"])
        for i, (pos, s) in enumerate(zip(grid.candidates, scores)):
            writer.writerow([i, pos[0], pos[1], pos[2], s])
