"""Flat ``section.key = value`` configuration files and shipped presets.

Values are Python/TOML-style literals: numbers, quoted strings, ``true`` /
``false`` and ``[a, b]`` lists. Lines starting with ``#`` are comments.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .acquisition import ExperimentConfig, calibrate_efficiencies
from .detection import BucketDetector, IccdModel, ObjectMask, load_mask, make_pinhole_mask
from .errors import ConfigurationError
from .optics import OpticalPath, TimingModel
from .skull import skull_mask
from .spdc import PlaneConfig, SpdcParams

PRESETS = ("position-skull", "momentum-skull", "position-pinhole-75um", "momentum-pinhole-75um")

_SECTIONS = {
    "spdc": SpdcParams,
    "bucket": BucketDetector,
    "iccd": IccdModel,
    "timing": TimingModel,
    "path": OpticalPath,
}
_OTHER_KEYS = {
    "plane": {"mode"},
    "state": {"gamma_marginal", "sigma_cond"},
    "mask": {"source", "pitch", "diameter", "grid"},
    "run": {"frames", "exposure_s", "trigger_rate_hz", "master_seed"},
    "calibration": {"target_eta", "target_photons_per_frame"},
    "reconstruction": {"theta"},
    "analysis": {"erode_px", "band_rows", "partner_psf_sigma", "psf_mode", "spot_radius_px",
                 "edge_band_x", "edge_window_x", "edge_band_y", "edge_window_y"},
}


@dataclass(frozen=True)
class AnalysisSettings:
    erode_px: int = 3
    band_rows: int = 30
    partner_psf_sigma: float | None = None
    psf_mode: str = "edge"  # "edge" or "spot"
    spot_radius_px: float | None = None
    edge_band_x: tuple[int, int] | None = None
    edge_window_x: tuple[int, int] | None = None
    edge_band_y: tuple[int, int] | None = None
    edge_window_y: tuple[int, int] | None = None


@dataclass(frozen=True)
class Settings:
    experiment: ExperimentConfig
    mask_spec: dict
    theta: float | None = None
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)

    @property
    def effective_theta(self) -> float:
        if self.theta is not None:
            return self.theta
        return 5.0 * self.experiment.iccd.read_noise_sigma


def _parse_value(raw: str, key: str):
    text = raw.strip()
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if lowered in ("none", "null"):
        return None
    for candidate in (text, text.split("#", 1)[0].strip()):
        try:
            return ast.literal_eval(candidate)
        except (ValueError, SyntaxError):
            pass
    raise ConfigurationError(f"cannot parse value for {key!r}: {raw.strip()!r}", key=key)


def parse_text(text: str, source: str = "<config>") -> dict[str, object]:
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"{source}:{lineno}: expected 'section.key = value'")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        section, dot, name = key.partition(".")
        if not dot or not name:
            raise ConfigurationError(f"{source}:{lineno}: key {key!r} lacks a section",
                                     key=key)
        allowed = ({f.name for f in fields(_SECTIONS[section])} if section in _SECTIONS
                   else _OTHER_KEYS.get(section))
        if allowed is None or name not in allowed:
            raise ConfigurationError(f"{source}:{lineno}: unknown key {key!r}", key=key)
        values[key] = _parse_value(raw, key)
    return values


def _section(values: dict, name: str) -> dict:
    prefix = name + "."
    return {k[len(prefix):]: v for k, v in values.items() if k.startswith(prefix)}


def _build(cls, kwargs: dict, section: str):
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigurationError(f"invalid [{section}] settings: {exc}", key=section) from exc


def _number(values: dict, key: str, kind=float, default=None):
    v = values.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigurationError(f"{key} must be a number, got {v!r}", key=key)
    if kind is int:
        if float(v) != int(v):
            raise ConfigurationError(f"{key} must be an integer, got {v!r}", key=key)
        return int(v)
    if not math.isfinite(v):
        raise ConfigurationError(f"{key} must be finite", key=key)
    return float(v)


def _check_numbers(values: dict, section: str, cls):
    for f in fields(cls):
        key = f"{section}.{f.name}"
        if key not in values:
            continue
        v = values[key]
        if f.name == "sensor_px":
            if not (isinstance(v, (list, tuple)) and len(v) == 2
                    and all(isinstance(x, int) for x in v)):
                raise ConfigurationError(f"{key} must be [width, height]", key=key)
        elif f.name == "degenerate":
            if not isinstance(v, bool):
                raise ConfigurationError(f"{key} must be true or false", key=key)
        elif f.name == "orientation_sign":
            _number(values, key, int)
        else:
            _number(values, key)


def build_mask(values: dict, base_dir: Path) -> tuple[ObjectMask, dict]:
    """Returns the mask and the resolved ``mask.*`` keys that rebuild it."""
    source = values.get("mask.source", "skull")
    if not isinstance(source, str):
        raise ConfigurationError("mask.source must be a string", key="mask.source")
    pitch = _number(values, "mask.pitch")
    grid = values.get("mask.grid", [64, 64])
    if not (isinstance(grid, (list, tuple)) and len(grid) == 2 and all(isinstance(g, int) for g in grid)):
        raise ConfigurationError("mask.grid must be [rows, cols]", key="mask.grid")
    if source == "skull":
        mask = skull_mask() if pitch is None else skull_mask(pitch)
        return mask, {"mask.source": source, "mask.pitch": mask.pixel_pitch}
    if source == "pinhole":
        diameter = _number(values, "mask.diameter")
        if diameter is None:
            raise ConfigurationError("pinhole mask needs mask.diameter", key="mask.diameter")
        pitch = pitch or 12.5e-6
        return make_pinhole_mask(diameter, pitch, grid), {
            "mask.source": source, "mask.pitch": pitch, "mask.diameter": diameter,
            "mask.grid": list(grid)}
    if source in ("ones", "zeros"):
        if pitch is None:
            raise ConfigurationError(f"{source} mask needs mask.pitch", key="mask.pitch")
        fill = np.ones if source == "ones" else np.zeros
        return ObjectMask(fill(tuple(grid)), pitch, name=source), {
            "mask.source": source, "mask.pitch": pitch, "mask.grid": list(grid)}
    path = Path(source)
    if not path.is_absolute():
        path = (base_dir / path).resolve()
    if pitch is None:
        raise ConfigurationError("mask files need mask.pitch", key="mask.pitch")
    if not path.exists():
        raise ConfigurationError(f"mask file not found: {path}", key="mask.source")
    return load_mask(path, pitch), {"mask.source": str(path), "mask.pitch": pitch}


def settings_from_values(values: dict, base_dir: Path | str = ".") -> Settings:
    base_dir = Path(base_dir)
    for section, cls in _SECTIONS.items():
        _check_numbers(values, section, cls)
    plane = PlaneConfig.parse(values.get("plane.mode", "position"))
    mask, mask_spec = build_mask(values, base_dir)
    spdc = _build(SpdcParams, _section(values, "spdc"), "spdc")
    bucket_kw = _section(values, "bucket")
    bucket_kw.setdefault("max_trigger_rate_hz", 15e3 if plane is PlaneConfig.POSITION else 10e3)
    bucket = _build(BucketDetector, bucket_kw, "bucket")
    iccd_kw = _section(values, "iccd")
    if "sensor_px" in iccd_kw:
        iccd_kw["sensor_px"] = tuple(iccd_kw["sensor_px"])
    iccd = _build(IccdModel, iccd_kw, "iccd")
    timing = _build(TimingModel, _section(values, "timing"), "timing")
    path_kw = _section(values, "path")
    if "orientation_sign" in path_kw:
        path_kw["orientation_sign"] = int(path_kw["orientation_sign"])
    path = _build(OpticalPath, path_kw, "path")
    master_seed = _number(values, "run.master_seed", int, 0)
    if master_seed < 0:
        raise ConfigurationError("run.master_seed must be non-negative", key="run.master_seed")
    frames = _number(values, "run.frames", int, 1800)
    experiment = ExperimentConfig(
        plane=plane, mask=mask, spdc=spdc,
        gamma_override=_number(values, "state.gamma_marginal"),
        sigma_override=_number(values, "state.sigma_cond"),
        bucket=bucket, iccd=iccd, timing=timing, path=path,
        frames=frames,
        exposure_s=_number(values, "run.exposure_s", float, 2.0),
        trigger_rate_hz=_number(values, "run.trigger_rate_hz"),
        master_seed=master_seed,
    )
    eta = _number(values, "calibration.target_eta")
    photons = _number(values, "calibration.target_photons_per_frame")
    if eta is not None or photons is not None:
        experiment = calibrate_efficiencies(eta, photons, experiment)

    analysis_kw = _section(values, "analysis")
    for key in ("edge_band_x", "edge_window_x", "edge_band_y", "edge_window_y"):
        if analysis_kw.get(key) is not None:
            v = analysis_kw[key]
            if not (isinstance(v, (list, tuple)) and len(v) == 2):
                raise ConfigurationError(f"analysis.{key} must be [start, stop]", key=f"analysis.{key}")
            analysis_kw[key] = (int(v[0]), int(v[1]))
    if analysis_kw.get("psf_mode", "edge") not in ("edge", "spot"):
        raise ConfigurationError("analysis.psf_mode must be 'edge' or 'spot'", key="analysis.psf_mode")
    analysis = _build(AnalysisSettings, analysis_kw, "analysis")
    return Settings(experiment, mask_spec, _number(values, "reconstruction.theta"), analysis)


def preset_path(name: str) -> Path:
    return Path(str(resources.files("ghostcam") / "presets" / f"{name}.cfg"))


def resolve_config_path(name_or_path) -> Path:
    """A file path, or the name of a shipped preset."""
    path = Path(name_or_path)
    if path.is_file():
        return path
    if str(name_or_path) in PRESETS:
        return preset_path(str(name_or_path))
    raise ConfigurationError(f"config file not found: {name_or_path}", key="config")


def load_settings(name_or_path, overrides: dict | None = None) -> Settings:
    path = resolve_config_path(name_or_path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}", key="config") from exc
    values = parse_text(text, str(path))
    if overrides:
        values.update(overrides)
    return settings_from_values(values, path.parent)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    return str(v)


def echo_values(settings: Settings) -> dict[str, object]:
    """Fully resolved key/value pairs; re-loading them reproduces the run exactly."""
    cfg = settings.experiment
    out: dict[str, object] = {"plane.mode": cfg.plane.value}
    for section, obj in (("spdc", cfg.spdc), ("bucket", cfg.bucket), ("iccd", cfg.iccd),
                         ("timing", cfg.timing), ("path", cfg.path)):
        for f in fields(obj):
            v = getattr(obj, f.name)
            out[f"{section}.{f.name}"] = list(v) if isinstance(v, tuple) else v
    if cfg.gamma_override is not None:
        out["state.gamma_marginal"] = cfg.gamma_override
    if cfg.sigma_override is not None:
        out["state.sigma_cond"] = cfg.sigma_override
    out.update(settings.mask_spec)
    out["run.frames"] = cfg.frames
    out["run.exposure_s"] = cfg.exposure_s
    out["run.trigger_rate_hz"] = cfg.trigger_rate_hz
    out["run.master_seed"] = cfg.master_seed
    if settings.theta is not None:
        out["reconstruction.theta"] = settings.theta
    for f in fields(settings.analysis):
        v = getattr(settings.analysis, f.name)
        if v is not None:
            out[f"analysis.{f.name}"] = list(v) if isinstance(v, tuple) else v
    return out


def format_values(values: dict[str, object]) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in values.items())


def with_overrides(settings: Settings, **run) -> Settings:
    """Replace run-level experiment fields (frames, master_seed, ...)."""
    return replace(settings, experiment=replace(settings.experiment, **run))
