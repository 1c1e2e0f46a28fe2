"""End-to-end enhancement pipeline and batch driver.

Chain per utterance: STFT -> failure detection -> SRP-PHAT localization
-> delay alignment -> phase-calibration compensation -> MVDR -> MSC/PDM
masking -> overlap-add synthesis.  One single-channel output per input.
"""

from __future__ import annotations

import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import masking
from .array import (
    ArrayGeometry,
    ChannelStatus,
    SourceLocation,
    align,
    detect_failures,
    load_geometry,
    steering_delays,
    tablet_geometry,
)
from .audio_io import MultichannelWave, read_multichannel, write_wave
from .beamformer import (
    apply_beamformer,
    estimate_noise_covariance,
    mvdr_weights,
    steering_vector,
)
from .calibration import (
    CalibrationFilter,
    compensate,
    load_filter,
    offline_calibrate,
    online_calibrate,
)
from .errors import EnhancementError
from .filterbank import Spectrogram, StftConfig, stft_analyze, stft_synthesize
from .localizer import GridSpec, SearchGrid, build_grid, srp_phat


@dataclass
class EnhancementConfig:
    stft: StftConfig = field(default_factory=StftConfig)
    geometry: ArrayGeometry = field(default_factory=tablet_geometry)
    grid: GridSpec = field(default_factory=GridSpec)
    msc_enabled: bool = True
    pdm_enabled: bool = True
    floor: float = masking.DEFAULT_FLOOR
    welch_halfwidth: int = masking.WELCH_HALFWIDTH
    calibration_paths: tuple[str, ...] = ()
    online_calibration: bool = False
    dump_masks: bool = False
    dump_scores: bool = False

    def load_calibration(self) -> list[CalibrationFilter]:
        filters = []
        for p in self.calibration_paths:
            filt, _rate, fft_size = load_filter(p)
            if filt.phase.shape != (self.geometry.channel_count, self.stft.bins):
                raise EnhancementError(
                    f"calibration file {p} shape {filt.phase.shape} does not match "
                    f"({self.geometry.channel_count}, {self.stft.bins})"
                )
            filters.append(filt)
        return filters


def enhance_utterance(
    config: EnhancementConfig,
    wave: MultichannelWave,
    calibration: Sequence[CalibrationFilter] | None = None,
) -> tuple[MultichannelWave, dict]:
    """Run the full chain on one utterance; returns (1-channel wave, diagnostics)."""
    if wave.channel_count != config.geometry.channel_count:
        raise EnhancementError(
            f"wave has {wave.channel_count} channels, geometry expects "
            f"{config.geometry.channel_count}"
        )
    filters = list(calibration) if calibration is not None else config.load_calibration()

    spec = stft_analyze(wave, config.stft)
    if wave.channel_count >= 2:
        status = detect_failures(wave, config.geometry)
    else:
        status = ChannelStatus(failed=np.zeros(1, dtype=bool), metric=np.ones(1))
    usable = status.usable

    if len(usable) >= 2:
        grid = build_grid(config.geometry, config.grid)
        loc = srp_phat(spec, config.geometry, grid, status)
    else:
        loc = SourceLocation(
            position=config.geometry.centroid, delays=np.zeros(wave.channel_count)
        )
    aligned = align(spec, loc)

    if config.online_calibration and filters:
        filters = filters + [online_calibrate(aligned, filters[0], status)]
    if filters:
        aligned = compensate(aligned, filters)

    # MVDR on the aligned (zero-delay) channels
    work = aligned.select_channels(usable)
    cov = estimate_noise_covariance(work)
    zero_loc = SourceLocation(position=loc.position, delays=np.zeros(len(usable)))
    bf = mvdr_weights(cov, steering_vector(zero_loc, spec.freqs))
    beamformed = apply_beamformer(work, bf)

    msc_mask = None
    pdm_mask = None
    if config.msc_enabled and len(usable) >= 2:
        cross = masking.welch_cross_spectra(aligned, usable, config.welch_halfwidth)
        msc_mask = masking.msc(cross)
    if config.pdm_enabled:
        pdm_channels = [i for i in usable if i not in config.geometry.pdm_excluded]
        if len(pdm_channels) >= 2:
            field_ = masking.pdm(aligned, pdm_channels)
            pdm_mask = masking.pdm_mask(field_, wave.sample_rate)
    masked = masking.combine_and_apply(beamformed, msc_mask, pdm_mask, config.floor)
    enhanced = stft_synthesize(masked)

    diagnostics = {
        "failed_channels": [int(i) for i in np.flatnonzero(status.failed)],
        "source_position": [float(v) for v in loc.position],
        "mean_msc": float(msc_mask.gains.mean()) if msc_mask is not None else None,
        "mean_pdm_gain": float(pdm_mask.gains.mean()) if pdm_mask is not None else None,
        "noise_frames": int(np.count_nonzero(cov.frame_mask)),
        "calibration_stages": [f.stage for f in filters],
    }
    return enhanced, diagnostics


def _analyze_and_align(config: EnhancementConfig, wave: MultichannelWave, position=None):
    spec = stft_analyze(wave, config.stft)
    status = detect_failures(wave, config.geometry)
    if position is not None:
        loc = steering_delays(config.geometry, position)
    else:
        grid = build_grid(config.geometry, config.grid)
        loc = srp_phat(spec, config.geometry, grid, status)
    return align(spec, loc), status


def calibrate_offline(
    config: EnhancementConfig,
    utterances: Sequence[MultichannelWave],
    positions: Sequence | None = None,
) -> CalibrationFilter:
    """Stage-1 calibration over a training set of raw multichannel waves.

    ``positions`` supplies known source positions (e.g. for simulated
    training data); otherwise each utterance is localized with SRP-PHAT.
    """
    if positions is None:
        positions = [None] * len(utterances)
    return offline_calibrate(
        _analyze_and_align(config, w, p) for w, p in zip(utterances, positions)
    )


def calibrate_online(
    config: EnhancementConfig,
    wave: MultichannelWave,
    stage1: CalibrationFilter,
    position=None,
) -> CalibrationFilter:
    """Stage-2 calibration for one utterance on top of the stage-1 filter."""
    aligned, status = _analyze_and_align(config, wave, position)
    return online_calibrate(aligned, stage1, status)


def run_batch(
    config: EnhancementConfig,
    manifest: Sequence[dict],
    out_dir: str | Path,
    strict: bool = False,
) -> dict:
    """Enhance every manifest entry ({'id': ..., 'input': descriptor}) into out_dir.

    Returns the report dict; ``report['exit_code']`` is 0 on full success,
    2 if some items failed (non-strict), and errors raise under --strict.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    failures = 0
    for item in manifest:
        utt_id = item["id"]
        try:
            wave = read_multichannel(item["input"])
            enhanced, diagnostics = enhance_utterance(config, wave)
            out_path = out_dir / f"{utt_id}.enh.wav"
            write_wave(enhanced, out_path, encoding="float32")
            entries.append({"id": utt_id, "output": str(out_path), "ok": True, **diagnostics})
        except Exception as exc:
            if strict:
                raise
            failures += 1
            entries.append({"id": utt_id, "ok": False, "error": str(exc)})
    report = {
        "utterances": entries,
        "n_total": len(entries),
        "n_failed": failures,
        "exit_code": 0 if failures == 0 else 2,
    }
    return report


# -- config file ----------------------------------------------------------

def config_to_toml(config: EnhancementConfig, geometry_inline: bool = True) -> str:
    g = config.geometry
    lines = [
        "[stft]",
        f"window_length = {config.stft.window_length}",
        f"hop = {config.stft.hop}",
        f'window = "{config.stft.window}"',
        f"fft_size = {config.stft.fft_size}",
        "",
        "[masks]",
        f"msc = {str(config.msc_enabled).lower()}",
        f"pdm = {str(config.pdm_enabled).lower()}",
        f"floor = {float(config.floor)!r}",
        f"welch_halfwidth = {config.welch_halfwidth}",
        "",
        "[localizer]",
        f"azimuth_step_deg = {config.grid.azimuth_step_deg!r}",
        f"elevation_start_deg = {config.grid.elevation_start_deg!r}",
        f"elevation_stop_deg = {config.grid.elevation_stop_deg!r}",
        f"elevation_step_deg = {config.grid.elevation_step_deg!r}",
        f"radius_m = {config.grid.radius_m!r}",
        "",
        "[calibration]",
        f"paths = {list(config.calibration_paths)!r}",
        f"online = {str(config.online_calibration).lower()}",
        "",
        "[geometry]",
        f"speed_of_sound = {float(g.speed_of_sound)!r}",
        f"pdm_excluded = {sorted(g.pdm_excluded)!r}",
        "mic_positions = [",
    ]
    for p in g.mic_positions:
        lines.append(f"    [{float(p[0])!r}, {float(p[1])!r}, {float(p[2])!r}],")
    lines.append("]")
    return "\n".join(lines) + "\n"


def load_config(path: str | Path) -> EnhancementConfig:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    cfg = EnhancementConfig()
    if "stft" in data:
        cfg = replace(cfg, stft=StftConfig(**data["stft"]))
    if "masks" in data:
        m = data["masks"]
        cfg = replace(
            cfg,
            msc_enabled=m.get("msc", cfg.msc_enabled),
            pdm_enabled=m.get("pdm", cfg.pdm_enabled),
            floor=m.get("floor", cfg.floor),
            welch_halfwidth=m.get("welch_halfwidth", cfg.welch_halfwidth),
        )
    if "localizer" in data:
        cfg = replace(cfg, grid=GridSpec(**data["localizer"]))
    if "calibration" in data:
        c = data["calibration"]
        cfg = replace(
            cfg,
            calibration_paths=tuple(c.get("paths", ())),
            online_calibration=c.get("online", cfg.online_calibration),
        )
    if "geometry" in data:
        gd = data["geometry"]
        if "file" in gd:
            cfg = replace(cfg, geometry=load_geometry(gd["file"]))
        elif "mic_positions" in gd:
            cfg = replace(
                cfg,
                geometry=ArrayGeometry(
                    mic_positions=np.asarray(gd["mic_positions"], dtype=np.float64),
                    speed_of_sound=gd.get("speed_of_sound", 343.0),
                    pdm_excluded=frozenset(gd.get("pdm_excluded", [2])),
                ),
            )
    return cfg


def save_report(report: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report, indent=2) + "\n")
