"""Image metrics: contrast, edge and spot widths, field width, modes, EPR product."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .errors import DomainError, MetricError
from .spdc import SpdcParams, epr_variance_product

# 90%-10% width of an error-function edge, in units of its sigma
EDGE_WIDTH_FACTOR = 2.56
EPR_BOUND = 0.25


@dataclass
class MetricsReport:
    contrast: float | None = None
    psf_sigma_x: float | None = None
    psf_sigma_y: float | None = None
    field_width_gamma: float | None = None
    mode_count: float | None = None
    bits_per_photon: float | None = None
    heralding_efficiency: float | None = None
    variance_product_hbar2: float | None = None
    epr_violation: bool | None = None

    def to_dict(self) -> dict:
        out = {}
        for key, value in asdict(self).items():
            if isinstance(value, (bool, np.bool_)):
                value = bool(value)
            elif value is not None:
                value = float(value)
            out[key] = value
        return out


def _counts(image) -> np.ndarray:
    return np.asarray(getattr(image, "counts", image), dtype=float)


def contrast(image, bright_region, dark_region) -> float:
    """Michelson contrast of the region means."""
    counts = _counts(image)
    bright = np.asarray(bright_region, dtype=bool)
    dark = np.asarray(dark_region, dtype=bool)
    if not bright.any() or not dark.any():
        raise MetricError("contrast regions must be non-empty")
    if (bright & dark).any():
        raise MetricError("contrast regions must be disjoint")
    mu_b = counts[bright].mean()
    mu_d = counts[dark].mean()
    if mu_b + mu_d == 0:
        raise MetricError("contrast undefined: both regions are empty of counts")
    return float((mu_b - mu_d) / (mu_b + mu_d))


def expected_image(mask, iccd, sign: int) -> np.ndarray:
    """Mask transmittance as it appears on the sensor grid (nearest-cell sampling)."""
    rows, cols = iccd.shape
    rr, cc = np.indices((rows, cols))
    plane = iccd.to_plane(np.stack([cc, rr], axis=-1)) * sign
    idx = np.rint(mask.to_index(plane)).astype(np.intp)
    mr, mc = mask.shape
    inside = (idx[..., 0] >= 0) & (idx[..., 0] < mc) & (idx[..., 1] >= 0) & (idx[..., 1] < mr)
    out = np.zeros((rows, cols))
    out[inside] = mask.transmittance[idx[..., 1][inside], idx[..., 0][inside]]
    return out


def contrast_regions(mask, iccd, sign: int, erode_px: int = 3):
    """Bright and dark sensor regions from the ground-truth mask, eroded by ``erode_px``.

    The dark region is limited to the footprint of the mask grid.
    """
    expected = expected_image(mask, iccd, sign)
    lo, hi = mask.bounds()
    rows, cols = iccd.shape
    rr, cc = np.indices((rows, cols))
    plane = iccd.to_plane(np.stack([cc, rr], axis=-1)) * sign
    footprint = np.all((plane >= lo) & (plane < hi), axis=-1)
    structure = np.ones((3, 3), dtype=bool)
    bright = expected >= 0.5
    dark = footprint & ~bright
    if erode_px > 0:
        bright = ndimage.binary_erosion(bright, structure, iterations=erode_px)
        dark = ndimage.binary_erosion(dark, structure, iterations=erode_px)
    return bright, dark


def _crossing(profile, i_hi, i_lo, level):
    """Linear interpolation of ``level`` between indices i_hi (above) and i_lo (below)."""
    a, b = profile[i_hi], profile[i_lo]
    if a == b:
        return float(i_hi)
    return i_hi + (a - level) / (a - b) * (i_lo - i_hi)


def edge_width_90_10(profile) -> float:
    """Distance in samples between the 90% and 10% points of a bright-to-dark edge."""
    p = np.asarray(profile, dtype=float)
    if p.size < 2 or not np.all(np.isfinite(p)):
        raise MetricError("edge profile must be finite with at least two samples")
    peak = int(np.argmax(p))
    top = p[peak]
    if top <= 0:
        raise MetricError("edge profile has no bright side")
    # the edge falls away from the peak on the side that reaches 10% first
    candidates = []
    for step in (1, -1):
        i = peak
        while 0 <= i + step < p.size and p[i + step] > 0.1 * top:
            i += step
        if 0 <= i + step < p.size:
            candidates.append((abs(i + step - peak), step, i + step))
    if not candidates:
        raise MetricError("no bright-to-dark transition found in the profile "
                          f"(max {top:g}, min {p.min():g})")
    _, step, i10 = min(candidates)
    j = i10
    while p[j] < 0.9 * top:
        j -= step
    if j + step == i10:
        # no sample inside the transition: the edge is unresolved
        return 0.0
    x10 = _crossing(p, i10 - step, i10, 0.1 * top)
    x90 = _crossing(p, j, j + step, 0.9 * top)
    return abs(x10 - x90)


def edge_psf_sigma(image, band, axis: int = 1, pixel_pitch: float = 1.0,
                   window: tuple[int, int] | None = None) -> float:
    """PSF stdev from the 90%-10% width of a band-averaged edge profile.

    ``band`` is a ``(start, stop)`` range across the profile direction (30 rows
    for a horizontal profile). ``axis=1`` takes the profile along columns,
    ``axis=0`` along rows. ``window`` restricts the profile samples.
    """
    counts = _counts(image)
    start, stop = band
    if axis == 1:
        profile = counts[start:stop, :].mean(axis=0)
    elif axis == 0:
        profile = counts[:, start:stop].mean(axis=1)
    else:
        raise ValueError("axis must be 0 or 1")
    if window is not None:
        profile = profile[window[0]:window[1]]
    return edge_width_90_10(profile) / EDGE_WIDTH_FACTOR * pixel_pitch


def _trailing_edge(grid, band_rows, half_window):
    rows, cols = grid.shape
    has = grid.any(axis=1)
    last = np.where(has, cols - 1 - np.argmax(grid[:, ::-1], axis=1), -1)
    best = None
    for r0 in range(0, rows - band_rows + 1):
        seg = last[r0:r0 + band_rows]
        if np.any(seg < half_window) or np.any(seg + half_window >= cols):
            continue
        edge = int(np.median(seg))
        if not grid[r0:r0 + band_rows, edge - half_window + 1:edge + 1].all():
            continue
        score = int(seg.max() - seg.min())
        if best is None or score < best[0]:
            best = (score, r0, edge)
    return best


def find_edge_band(expected: np.ndarray, axis: int = 1, band_rows: int = 30,
                   half_window: int = 22) -> tuple[tuple[int, int], tuple[int, int]]:
    """Locate the straightest bright-to-dark edge of a ground-truth image.

    For ``axis=1`` (profiles along columns) each row's outermost bright
    column, on either side, is found; the band of ``band_rows`` consecutive
    rows where it varies least wins. Returns the band and a profile window of
    ``half_window`` samples either side of the edge.
    """
    grid = np.asarray(expected) >= 0.5
    if axis == 0:
        grid = grid.T
    cols = grid.shape[1]
    found = []
    right = _trailing_edge(grid, band_rows, half_window)
    if right is not None:
        score, r0, edge = right
        found.append((score, r0, (edge - half_window, edge + half_window + 2)))
    left = _trailing_edge(grid[:, ::-1], band_rows, half_window)
    if left is not None:
        score, r0, edge = left
        edge = cols - 1 - edge
        found.append((score, r0, (edge - half_window - 1, edge + half_window + 1)))
    if not found:
        raise MetricError("no straight edge found in the ground-truth image")
    _, r0, window = min(found, key=lambda f: f[0])
    return (r0, r0 + band_rows), window


def spot_width(image, pixel_pitch: float = 1.0, radius_px: float | None = None):
    """Count-weighted stdev (x, y) about the centroid; optionally within ``radius_px``
    of the centroid of the brightest smoothed spot."""
    counts = _counts(image)
    total = counts.sum()
    if total <= 0:
        raise MetricError("spot width undefined for an empty image")
    rr, cc = np.indices(counts.shape)
    weights = counts
    if radius_px is not None:
        smooth = ndimage.gaussian_filter(counts, 2.0)
        r0, c0 = np.unravel_index(np.argmax(smooth), counts.shape)
        weights = np.where((rr - r0) ** 2 + (cc - c0) ** 2 <= radius_px ** 2, counts, 0.0)
        total = weights.sum()
    mx = (weights * cc).sum() / total
    my = (weights * rr).sum() / total
    sx = math.sqrt(max((weights * (cc - mx) ** 2).sum() / total, 0.0))
    sy = math.sqrt(max((weights * (rr - my) ** 2).sum() / total, 0.0))
    return sx * pixel_pitch, sy * pixel_pitch


def field_width(image, pixel_pitch: float = 1.0) -> float:
    """Count-weighted positional stdev about the centroid, averaged over x and y."""
    sx, sy = spot_width(image, pixel_pitch)
    return 0.5 * (sx + sy)


def mode_count(gamma: float, sigma: float) -> tuple[float, float]:
    """Distinguishable transverse states (gamma/sigma)^2 and the bits they carry."""
    if not gamma > 0 or not sigma > 0:
        raise DomainError("mode_count needs positive widths")
    modes = (gamma / sigma) ** 2
    return modes, math.log2(modes)


def heralding_efficiency(stats) -> float:
    if stats.total_triggers <= 0:
        raise MetricError("heralding efficiency undefined without triggers")
    return stats.total_detected_photons / stats.total_triggers


def epr_report(psf_pos: float, psf_mom: float, params: SpdcParams | None = None):
    """(variance product in hbar^2, whether it falls below 1/4)."""
    params = params or SpdcParams()
    product = epr_variance_product(psf_pos, psf_mom, params.magnification,
                                   params.effective_focal, params.lambda_down)
    return product, product < EPR_BOUND
