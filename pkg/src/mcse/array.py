"""Array geometry, steering delays, subband delay alignment, and
microphone-failure detection.

Geometry follows the 6-mic tablet convention: microphones on a
10 cm x 19 cm frame, channel 2 rear-facing and therefore excluded from
the phase-difference pair statistics by default.
"""

from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import MultichannelWave
from .errors import EnhancementError, NoUsableChannelsError, ShapeMismatchError
from .filterbank import Spectrogram

SPEED_OF_SOUND = 343.0

# failure-detector defaults; the 20 dB / 0.3 / 10 ms triplet is a fixed
# heuristic exposed here for configurability
RMS_DEVIATION_DB = 20.0
MIN_CROSS_CORRELATION = 0.3
MAX_LAG_SECONDS = 0.010


@dataclass
class ArrayGeometry:
    """Microphone positions in meters, one 3-vector per channel."""

    mic_positions: np.ndarray
    speed_of_sound: float = SPEED_OF_SOUND
    pdm_excluded: frozenset[int] = frozenset({2})

    def __post_init__(self) -> None:
        self.mic_positions = np.asarray(self.mic_positions, dtype=np.float64)
        if self.mic_positions.ndim != 2 or self.mic_positions.shape[1] != 3:
            raise EnhancementError("mic_positions must have shape (M, 3)")
        if self.mic_positions.shape[0] < 2:
            raise EnhancementError("need at least 2 microphones")
        if not np.all(np.isfinite(self.mic_positions)):
            raise EnhancementError("mic_positions must be finite")
        self.pdm_excluded = frozenset(int(i) for i in self.pdm_excluded)
        bad = [i for i in self.pdm_excluded if not 0 <= i < self.channel_count]
        if bad:
            raise EnhancementError(f"pdm_excluded indices out of range: {bad}")

    @property
    def channel_count(self) -> int:
        return self.mic_positions.shape[0]

    @property
    def centroid(self) -> np.ndarray:
        return self.mic_positions.mean(axis=0)


def tablet_geometry() -> ArrayGeometry:
    """Default 6-mic layout: 19 cm x 10 cm frame, channel 2 rear-facing."""
    pos = np.array(
        [
            [-0.095, 0.05, 0.0],   # 0 top-left
            [0.0, 0.05, 0.0],      # 1 top-center
            [0.0, 0.05, -0.02],    # 2 top-center, rear-facing
            [0.095, 0.05, 0.0],    # 3 top-right
            [-0.095, -0.05, 0.0],  # 4 bottom-left
            [0.095, -0.05, 0.0],   # 5 bottom-right
        ]
    )
    return ArrayGeometry(pos)


def load_geometry(path: str | Path) -> ArrayGeometry:
    """Load geometry from a TOML file with mic_positions / speed_of_sound / pdm_excluded."""
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return ArrayGeometry(
        mic_positions=np.asarray(data["mic_positions"], dtype=np.float64),
        speed_of_sound=float(data.get("speed_of_sound", SPEED_OF_SOUND)),
        pdm_excluded=frozenset(data.get("pdm_excluded", [2])),
    )


def save_geometry(geometry: ArrayGeometry, path: str | Path) -> None:
    lines = ["mic_positions = ["]
    for p in geometry.mic_positions:
        lines.append(f"    [{float(p[0])!r}, {float(p[1])!r}, {float(p[2])!r}],")
    lines.append("]")
    lines.append(f"speed_of_sound = {float(geometry.speed_of_sound)!r}")
    lines.append(f"pdm_excluded = {sorted(geometry.pdm_excluded)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class ChannelStatus:
    failed: np.ndarray  # bool per channel
    metric: np.ndarray  # diagnostic score per channel

    @property
    def usable(self) -> np.ndarray:
        return np.flatnonzero(~self.failed)


@dataclass
class SourceLocation:
    """Estimated source position and per-channel delays relative to channel 0."""

    position: np.ndarray
    delays: np.ndarray

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=np.float64)
        self.delays = np.asarray(self.delays, dtype=np.float64)
        if not np.all(np.isfinite(self.delays)):
            raise EnhancementError("delays must be finite")


def steering_delays(geometry: ArrayGeometry, position) -> SourceLocation:
    """TDOA of each microphone relative to channel 0 for a point source."""
    position = np.asarray(position, dtype=np.float64)
    dists = np.linalg.norm(geometry.mic_positions - position, axis=1)
    if np.any(dists < 1e-9):
        raise EnhancementError("source position coincides with a microphone")
    delays = (dists - dists[0]) / geometry.speed_of_sound
    return SourceLocation(position=position, delays=delays)


def align(spec: Spectrogram, loc: SourceLocation) -> Spectrogram:
    """Phase-advance each channel by its steering delay.

    A plane wave from the target direction becomes phase-aligned across
    channels; per-bin magnitudes are untouched (unit-modulus rotation).
    """
    if len(loc.delays) != spec.channel_count:
        raise ShapeMismatchError(
            f"{len(loc.delays)} delays for {spec.channel_count} channels"
        )
    ramp = np.exp(2j * np.pi * np.outer(loc.delays, spec.freqs))  # (C, F)
    return Spectrogram(
        spec.coeffs * ramp[:, np.newaxis, :], spec.config, spec.sample_rate, spec.n_samples
    )


def _max_normalized_xcorr(x: np.ndarray, y: np.ndarray, max_lag: int) -> float:
    """Max of the normalized cross-correlation over lags in [-max_lag, max_lag]."""
    ex = float(np.dot(x, x))
    ey = float(np.dot(y, y))
    if ex <= 0 or ey <= 0:
        return 0.0
    n = len(x)
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    X = np.fft.rfft(x, nfft)
    Y = np.fft.rfft(y, nfft)
    cc = np.fft.irfft(X * np.conj(Y), nfft)
    lags = np.concatenate([cc[: max_lag + 1], cc[-max_lag:]])
    return float(np.max(np.abs(lags)) / np.sqrt(ex * ey))


def detect_failures(
    wave: MultichannelWave,
    geometry: ArrayGeometry,
    rms_deviation_db: float = RMS_DEVIATION_DB,
    min_correlation: float = MIN_CROSS_CORRELATION,
    max_lag_s: float = MAX_LAG_SECONDS,
) -> ChannelStatus:
    """Flag channels whose level or inter-channel correlation is implausible.

    A channel fails if (a) its broadband RMS deviates from the median
    channel RMS by more than ``rms_deviation_db``, or (b) its best
    normalized cross-correlation against every reference channel stays
    below ``min_correlation`` within +-``max_lag_s``.
    """
    if wave.channel_count < 2:
        raise EnhancementError("failure detection needs at least 2 channels")
    x = wave.samples
    rms = np.sqrt(np.mean(x**2, axis=1))
    rms_db = 20.0 * np.log10(np.maximum(rms, 1e-12))
    med_db = float(np.median(rms_db))
    failed_level = np.abs(rms_db - med_db) > rms_deviation_db

    max_lag = max(1, int(round(max_lag_s * wave.sample_rate)))
    C = wave.channel_count
    best_corr = np.ones(C)
    for i in range(C):
        if failed_level[i]:
            best_corr[i] = 0.0
            continue
        partners = [
            j
            for j in range(C)
            if j != i and not failed_level[j] and j not in geometry.pdm_excluded
        ]
        if not partners:
            partners = [j for j in range(C) if j != i and not failed_level[j]]
        if not partners:
            best_corr[i] = 0.0
            continue
        best_corr[i] = max(
            _max_normalized_xcorr(x[i], x[j], max_lag) for j in partners
        )
    failed = failed_level | (best_corr < min_correlation)
    if np.all(failed):
        raise NoUsableChannelsError("every channel was flagged as failed")
    return ChannelStatus(failed=failed, metric=best_corr)
