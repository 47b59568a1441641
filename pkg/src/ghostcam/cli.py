"""Command-line front end: ``ghostcam simulate | delay-scan | analyze | calibrate``."""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import imageio
from .acquisition import calibrate_efficiencies, run_delay_scan, run_experiment
from .config import Settings, echo_values, format_values, load_settings, with_overrides
from .detection import load_mask
from .errors import ConfigurationError, MaskFormatError
from .pipeline import compute_metrics
from .reconstruction import GhostImage, reconstruct

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3
OUT_DIR_ENV = "GHOSTCAM_OUT_DIR"

log = logging.getLogger("ghostcam")


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def _out_dir(arg: str | None) -> Path:
    out = Path(arg or os.environ.get(OUT_DIR_ENV, "ghostcam-out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _progress(enabled: bool, label: str):
    if not enabled:
        return None

    def report(done, total):
        sys.stderr.write(f"\r{label} {done}/{total}")
        if done == total:
            sys.stderr.write("\n")
        sys.stderr.flush()

    return report


def _settings(args) -> Settings:
    settings = load_settings(args.config)
    run = {}
    if getattr(args, "seed", None) is not None:
        run["master_seed"] = args.seed
    if getattr(args, "frames", None) is not None:
        run["frames"] = args.frames
    return with_overrides(settings, **run) if run else settings


def _save_frames(stack, directory: Path, stats) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for i, frame in enumerate(stack):
        path = directory / f"frame_{i:05d}.pgm"
        imageio.write_pgm(path, frame.values)
        written.append(path)
    written.append(_write_json(directory / "frames.json", {
        "master_seed": stack.master_seed,
        "exposure_s": stack.exposure_s,
        "per_frame_photoelectrons": stats.per_frame_detected,
        "per_frame_triggers": stats.per_frame_triggers,
        "note": "analog values rounded and clipped to [0, 65535]",
    }))
    return written


def cmd_simulate(args) -> int:
    started = _now()
    settings = _settings(args)
    cfg = settings.experiment
    out = _out_dir(args.out_dir)
    stack, stats = run_experiment(cfg, workers=args.workers,
                                  progress=_progress(args.progress, "herald"))
    image = reconstruct(stack, theta=settings.effective_theta, workers=args.workers,
                        progress=_progress(args.progress, "frame"))
    image.meta["run_stats"] = {
        "total_triggers": stats.total_triggers,
        "total_detected_photons": stats.total_detected_photons,
        "heralding_efficiency": stats.heralding_efficiency,
    }
    metrics = compute_metrics(image, settings, stats.heralding_efficiency)

    echo = echo_values(settings)
    outputs = list(image.save(out / "ghost.pgm"))
    config_path = out / "config.cfg"
    config_path.write_text(format_values(echo))
    outputs.append(config_path)
    outputs.append(_write_json(out / "metrics.json", metrics.to_dict()))
    if args.png:
        imageio.write_png(out / "ghost.png", image.counts)
        outputs.append(out / "ghost.png")
    if args.save_frames:
        outputs.extend(_save_frames(stack, out / "frames", stats))
    manifest = {
        "config": echo,
        "master_seed": cfg.master_seed,
        "started": started,
        "finished": _now(),
        "outputs": [str(p.relative_to(out)) for p in outputs] + ["manifest.json"],
        "metrics": metrics.to_dict(),
        "run_stats": stats.to_dict(),
        "total_events": image.total_events,
    }
    _write_json(out / "manifest.json", manifest)
    print(json.dumps(metrics.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _parse_deltas(text: str) -> list[float]:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if not parts:
        raise ConfigurationError("--deltas-m needs at least one value", key="deltas")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ConfigurationError(f"invalid --deltas-m {text!r}", key="deltas") from None


def cmd_delay_scan(args) -> int:
    settings = _settings(args)
    deltas = _parse_deltas(args.deltas_m)
    out = _out_dir(args.out_dir)
    points = run_delay_scan(settings.experiment, deltas, frames=args.frames,
                            theta=settings.effective_theta, workers=args.workers)
    rows = []
    for p in points:
        name = f"delay_{p.delta_m:+.2f}m.pgm"
        p.image.save(out / name, {"delta_m": p.delta_m, "delta_t_s": p.delta_t_s})
        rows.append({"delta_m": p.delta_m, "delta_t_s": p.delta_t_s,
                     "detected_count": p.detected_count, "image": name,
                     "photoelectrons": p.stats.total_detected_photons})
        if args.progress:
            print(f"delta {p.delta_m:+.2f} m  dt {p.delta_t_s * 1e9:+.2f} ns  "
                  f"events {p.detected_count}", file=sys.stderr)
    summary = {"config": echo_values(settings), "points": rows}
    _write_json(out / "scan.json", summary)
    print(json.dumps(rows, indent=2))
    return EXIT_OK


def cmd_analyze(args) -> int:
    settings = _settings(args)
    image = GhostImage.load(args.image)
    if args.mask:
        mask = load_mask(args.mask, settings.experiment.mask.pixel_pitch)
        spec = {"mask.source": str(Path(args.mask).resolve()), "mask.pitch": mask.pixel_pitch}
        settings = replace(settings, experiment=replace(settings.experiment, mask=mask),
                           mask_spec=spec)
    expected = settings.experiment.iccd.shape
    if image.counts.shape != expected:
        raise ConfigurationError(
            f"image is {image.counts.shape[1]}x{image.counts.shape[0]} but the sensor is "
            f"{expected[1]}x{expected[0]}", key="iccd.sensor_px")
    heralding = image.meta.get("run_stats", {}).get("heralding_efficiency")
    metrics = compute_metrics(image, settings, heralding)
    out = Path(args.out) if args.out else Path(args.image).with_name("metrics.json")
    _write_json(out, metrics.to_dict())
    print(json.dumps(metrics.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    settings = _settings(args)
    cfg = calibrate_efficiencies(args.eta, args.photons_per_frame, settings.experiment)
    text = format_values(echo_values(replace(settings, experiment=cfg)))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"# camera survival p = {cfg.camera_survival:.6g}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ghostcam",
                                     description="Camera-based ghost imaging simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, frames=True):
        p.add_argument("config", help="config file or preset name")
        p.add_argument("--seed", type=int, help="override run.master_seed")
        if frames:
            p.add_argument("--frames", type=int, help="override run.frames")
        p.add_argument("--workers", type=int, default=1,
                       help="worker processes (outputs do not depend on this)")
        p.add_argument("--progress", action="store_true", help="frame counter on stderr")

    p = sub.add_parser("simulate", help="run, reconstruct and analyse one experiment")
    common(p)
    p.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or ./ghostcam-out)")
    p.add_argument("--png", action="store_true", help="also write a linear PNG rendering")
    p.add_argument("--save-frames", action="store_true",
                   help="write every analog frame as 16-bit PGM")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("delay-scan", help="repeat a run over cable-length changes")
    common(p)
    p.add_argument("--deltas-m", default="-2,-1,0,1,2",
                   help="comma-separated cable length changes in metres")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_delay_scan)

    p = sub.add_parser("analyze", help="recompute metrics from a stored ghost image")
    p.add_argument("image", help="ghost image PGM (JSON sidecar is read if present)")
    p.add_argument("--config", required=True, help="config file or preset name")
    p.add_argument("--mask", help="ground-truth mask image (defaults to the config mask)")
    p.add_argument("--out", help="metrics JSON path (default: metrics.json beside the image)")
    p.set_defaults(func=cmd_analyze, seed=None, frames=None)

    p = sub.add_parser("calibrate", help="fit camera efficiency to photon/heralding targets")
    p.add_argument("config", help="config file or preset name")
    p.add_argument("--photons-per-frame", type=float)
    p.add_argument("--eta", type=float, help="target heralding efficiency")
    p.add_argument("--out", help="write the calibrated config here")
    p.set_defaults(func=cmd_calibrate, seed=None, frames=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        key = f" [{exc.key}]" if exc.key else ""
        print(f"ghostcam: configuration error{key}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, MaskFormatError) as exc:
        print(f"ghostcam: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
