"""Objective enhancement metrics: SI-SDR and segmental SNR."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EnhancementError

SI_SDR_CAP_DB = 60.0
SEGSNR_FRAME_SECONDS = 0.032
SEGSNR_MIN_DB = -10.0
SEGSNR_MAX_DB = 35.0


@dataclass
class MetricReport:
    si_sdr_db: float
    segmental_snr_db: float
    si_sdr_noisy_db: float | None = None
    si_sdr_improvement_db: float | None = None
    mask_stats: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {
            "si_sdr_db": self.si_sdr_db,
            "segmental_snr_db": self.segmental_snr_db,
        }
        if self.si_sdr_noisy_db is not None:
            out["si_sdr_noisy_db"] = self.si_sdr_noisy_db
            out["si_sdr_improvement_db"] = self.si_sdr_improvement_db
        if self.mask_stats:
            out["mask_stats"] = self.mask_stats
        return out


def _trim_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = min(len(a), len(b))
    return a[:n], b[:n]


def si_sdr(estimate: np.ndarray, reference: np.ndarray, cap_db: float = SI_SDR_CAP_DB) -> float:
    """Scale-invariant SDR: 10 log10(|a s|^2 / |a s - s_hat|^2), a = <s_hat, s>/<s, s>."""
    estimate, reference = _trim_pair(
        np.asarray(estimate, dtype=np.float64), np.asarray(reference, dtype=np.float64)
    )
    ref_energy = float(np.dot(reference, reference))
    if ref_energy <= 0:
        raise EnhancementError("zero-energy reference")
    alpha = float(np.dot(estimate, reference)) / ref_energy
    target = alpha * reference
    err = target - estimate
    num = float(np.dot(target, target))
    den = float(np.dot(err, err))
    if den <= 0 or num / den > 10.0 ** (cap_db / 10.0):
        return cap_db
    return 10.0 * np.log10(num / den)


def segmental_snr(
    estimate: np.ndarray,
    reference: np.ndarray,
    sample_rate: int,
    frame_seconds: float = SEGSNR_FRAME_SECONDS,
) -> float:
    """Frame-wise SNR averaged over 32 ms frames, each clamped to [-10, 35] dB."""
    estimate, reference = _trim_pair(
        np.asarray(estimate, dtype=np.float64), np.asarray(reference, dtype=np.float64)
    )
    n = max(1, int(round(frame_seconds * sample_rate)))
    frames = len(reference) // n
    if frames == 0:
        raise EnhancementError("signal shorter than one segmental-SNR frame")
    vals = []
    for t in range(frames):
        s = reference[t * n : (t + 1) * n]
        e = estimate[t * n : (t + 1) * n] - s
        num = float(np.dot(s, s))
        den = max(float(np.dot(e, e)), 1e-30)
        vals.append(np.clip(10.0 * np.log10(max(num, 1e-30) / den), SEGSNR_MIN_DB, SEGSNR_MAX_DB))
    return float(np.mean(vals))


def evaluate(
    enhanced: np.ndarray,
    reference: np.ndarray,
    noisy: np.ndarray | None = None,
    sample_rate: int = 16000,
    mask_stats: dict | None = None,
) -> MetricReport:
    sdr = si_sdr(enhanced, reference)
    seg = segmental_snr(enhanced, reference, sample_rate)
    noisy_sdr = imp = None
    if noisy is not None:
        noisy_sdr = si_sdr(noisy, reference)
        imp = sdr - noisy_sdr
    return MetricReport(
        si_sdr_db=sdr,
        segmental_snr_db=seg,
        si_sdr_noisy_db=noisy_sdr,
        si_sdr_improvement_db=imp,
        mask_stats=mask_stats or {},
    )
