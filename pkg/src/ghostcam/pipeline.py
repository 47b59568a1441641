"""End-to-end run: acquisition, photon counting, metrics."""

from __future__ import annotations

import logging

from . import analysis
from .acquisition import RunStats, run_experiment
from .analysis import MetricsReport
from .config import Settings
from .errors import MetricError
from .reconstruction import GhostImage, reconstruct
from .spdc import PlaneConfig

log = logging.getLogger(__name__)


def _safe(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except MetricError as exc:
        log.info("metric undefined: %s", exc)
        return None


def _edge_widths(image: GhostImage, settings: Settings, expected):
    a = settings.analysis
    pitch = settings.experiment.iccd.pixel_pitch
    widths = []
    for axis, band, window in ((1, a.edge_band_x, a.edge_window_x),
                               (0, a.edge_band_y, a.edge_window_y)):
        if band is None:
            located = _safe(analysis.find_edge_band, expected, axis, a.band_rows)
            if located is None:
                widths.append(None)
                continue
            band, auto_window = located
            window = window or auto_window
        widths.append(_safe(analysis.edge_psf_sigma, image, band, axis, pitch, window))
    return widths


def compute_metrics(image: GhostImage, settings: Settings,
                    heralding: float | None = None) -> MetricsReport:
    cfg = settings.experiment
    a = settings.analysis
    pitch = cfg.iccd.pixel_pitch
    if image.counts.shape != cfg.iccd.shape:
        raise ValueError(f"image shape {image.counts.shape} does not match sensor {cfg.iccd.shape}")
    report = MetricsReport(heralding_efficiency=heralding)
    sign = cfg.image_sign

    bright, dark = analysis.contrast_regions(cfg.mask, cfg.iccd, sign, a.erode_px)
    report.contrast = _safe(analysis.contrast, image, bright, dark)

    if a.psf_mode == "spot":
        widths = _safe(analysis.spot_width, image, pitch, a.spot_radius_px)
        sx, sy = widths if widths is not None else (None, None)
    else:
        sx, sy = _edge_widths(image, settings, analysis.expected_image(cfg.mask, cfg.iccd, sign))
    report.psf_sigma_x, report.psf_sigma_y = sx, sy

    if settings.mask_spec.get("mask.source") == "ones":
        report.field_width_gamma = _safe(analysis.field_width, image, pitch)
    else:
        report.field_width_gamma = cfg.state.gamma_marginal

    known = [w for w in (sx, sy) if w]
    psf = sum(known) / len(known) if known else None
    if psf and report.field_width_gamma:
        report.mode_count, report.bits_per_photon = analysis.mode_count(
            report.field_width_gamma, psf)
    if psf and a.partner_psf_sigma:
        if cfg.plane is PlaneConfig.POSITION:
            pos, mom = psf, a.partner_psf_sigma
        else:
            pos, mom = a.partner_psf_sigma, psf
        report.variance_product_hbar2, report.epr_violation = analysis.epr_report(pos, mom, cfg.spdc)
    return report


def simulate(settings: Settings, workers: int = 1, progress=None) -> tuple[GhostImage, RunStats, MetricsReport]:
    stack, stats = run_experiment(settings.experiment, workers=workers)
    image = reconstruct(stack, theta=settings.effective_theta, workers=workers, progress=progress)
    image.meta["run_stats"] = {
        "total_triggers": stats.total_triggers,
        "total_detected_photons": stats.total_detected_photons,
        "heralding_efficiency": stats.heralding_efficiency,
    }
    metrics = compute_metrics(image, settings, stats.heralding_efficiency)
    return image, stats, metrics
