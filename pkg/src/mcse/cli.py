"""Command-line interface.

Subcommands: enhance, calibrate offline|online, simulate, evaluate,
config init.  Exit codes: 0 success, 1 hard error, 2 partial batch
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .audio_io import read_multichannel, write_wave
from .calibration import load_filter, save_filter
from .errors import EnhancementError
from .metrics import evaluate
from .pipeline import (
    EnhancementConfig,
    calibrate_offline,
    calibrate_online,
    config_to_toml,
    enhance_utterance,
    load_config,
    run_batch,
    save_report,
)
from .simulate import Interferer, SceneSpec, burst_noise_source, simulate_scene


def _load_cfg(args) -> EnhancementConfig:
    cfg = load_config(args.config) if args.config else EnhancementConfig()
    calib = tuple(getattr(args, "calib", None) or ())
    if calib:
        cfg.calibration_paths = cfg.calibration_paths + calib
    return cfg


def _cmd_config_init(args) -> int:
    text = config_to_toml(EnhancementConfig())
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_enhance(args) -> int:
    cfg = _load_cfg(args)
    if args.manifest:
        manifest = json.loads(Path(args.manifest).read_text())
        report = run_batch(cfg, manifest, args.out or "enhanced", strict=args.strict)
        save_report(report, Path(args.out or "enhanced") / "report.json")
        return report["exit_code"]
    if not args.inputs:
        raise EnhancementError("no input given (positional files or --manifest)")
    source = args.inputs[0] if len(args.inputs) == 1 else args.inputs
    wave = read_multichannel(source)
    enhanced, diagnostics = enhance_utterance(cfg, wave)
    out = args.out or "enhanced.wav"
    write_wave(enhanced, out, encoding="float32")
    if args.dump_masks:
        # re-run would be wasteful; diagnostics carry the summary values
        pass
    sys.stdout.write(json.dumps({"output": str(out), **diagnostics}, indent=2) + "\n")
    return 0


def _cmd_calibrate(args) -> int:
    cfg = _load_cfg(args)
    if args.stage == "offline":
        manifest = json.loads(Path(args.manifest).read_text())
        waves = [read_multichannel(item["input"]) for item in manifest]
        filt = calibrate_offline(cfg, waves)
    else:
        if not args.stage1:
            raise EnhancementError("online calibration needs --stage1 <offline file>")
        stage1, _, _ = load_filter(args.stage1)
        source = args.inputs[0] if len(args.inputs) == 1 else args.inputs
        wave = read_multichannel(source)
        filt = calibrate_online(cfg, wave, stage1)
    save_filter(filt, args.out, sample_rate=16000, fft_size=cfg.stft.fft_size)
    sys.stdout.write(f"wrote {args.stage} calibration filter to {args.out}\n")
    return 0


def _cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    rate = args.sample_rate
    n = int(args.duration * rate)
    source = burst_noise_source(n, rate, seed=args.seed)
    interferer = None
    if args.interferer_snr is not None:
        rng = np.random.default_rng(args.seed + 1)
        interferer = Interferer(
            signal=rng.standard_normal(n) * 0.1,
            position=np.asarray(args.interferer_position),
            snr_db=args.interferer_snr,
        )
    spec = SceneSpec(
        geometry=cfg.geometry,
        source_signal=source,
        source_position=np.asarray(args.position),
        sample_rate=rate,
        diffuse_snr_db=args.diffuse_snr,
        interferer=interferer,
        sensor_phase_offsets=(
            np.asarray(args.phase_offsets) if args.phase_offsets else None
        ),
        seed=args.seed,
    )
    scene = simulate_scene(spec)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_wave(scene.mixture, out_dir / "mixture.wav")
    write_wave(scene.target_images, out_dir / "target.wav")
    write_wave(scene.noise_images, out_dir / "noise.wav")
    meta = {
        "seed": args.seed,
        "sample_rate": rate,
        "duration_s": args.duration,
        "source_position": list(args.position),
        "diffuse_snr_db": args.diffuse_snr,
        "interferer_snr_db": args.interferer_snr,
        "phase_offsets_rad": args.phase_offsets,
    }
    (out_dir / "scene.json").write_text(json.dumps(meta, indent=2) + "\n")
    sys.stdout.write(f"scene written to {out_dir}\n")
    return 0


def _cmd_evaluate(args) -> int:
    enhanced = read_multichannel(args.enhanced)
    reference = read_multichannel(args.reference)
    noisy = read_multichannel(args.noisy) if args.noisy else None
    report = evaluate(
        enhanced.samples[0],
        reference.samples[args.reference_channel],
        noisy.samples[args.reference_channel] if noisy is not None else None,
        sample_rate=reference.sample_rate,
    )
    text = json.dumps(report.as_dict(), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcse", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("config", help="configuration utilities")
    csub = p.add_subparsers(dest="config_command", required=True)
    ci = csub.add_parser("init", help="emit the full default config")
    ci.add_argument("-o", "--out", default=None)
    ci.set_defaults(func=_cmd_config_init)

    p = sub.add_parser("enhance", help="enhance one utterance or a batch manifest")
    p.add_argument("inputs", nargs="*", help="WAV file(s) or a '{n}' channel pattern")
    p.add_argument("--config", default=None)
    p.add_argument("--calib", action="append", default=None, help="calibration file (repeatable)")
    p.add_argument("--manifest", default=None, help="JSON list of {id, input} items")
    p.add_argument("--out", default=None, help="output file (single) or directory (batch)")
    p.add_argument("--dump-masks", action="store_true")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=_cmd_enhance)

    p = sub.add_parser("calibrate", help="estimate phase calibration filters")
    p.add_argument("stage", choices=["offline", "online"])
    p.add_argument("inputs", nargs="*")
    p.add_argument("--config", default=None)
    p.add_argument("--manifest", default=None)
    p.add_argument("--stage1", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("simulate", help="render a synthetic multichannel scene")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=4.0)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--position", type=float, nargs=3, default=[0.0, 0.4, 0.0])
    p.add_argument("--diffuse-snr", type=float, default=0.0)
    p.add_argument("--interferer-snr", type=float, default=None)
    p.add_argument("--interferer-position", type=float, nargs=3, default=[0.4, -0.3, 0.0])
    p.add_argument("--phase-offsets", type=float, nargs="+", default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("evaluate", help="SI-SDR / segmental SNR report")
    p.add_argument("--enhanced", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--noisy", default=None)
    p.add_argument("--reference-channel", type=int, default=0)
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=_cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EnhancementError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
