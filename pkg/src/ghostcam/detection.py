"""Object mask, bucket detector and intensified-camera models.

Sensor coordinates: pixel (row, col) has its centre at index coordinates
(row, col); plane x maps to columns and plane y to rows, with the optical
axis at the sensor centre.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from . import imageio
from .errors import ConfigurationError, MaskFormatError


@dataclass(frozen=True, eq=False)
class ObjectMask:
    transmittance: np.ndarray
    pixel_pitch: float
    origin: tuple[float, float] = (0.0, 0.0)
    name: str = "custom"

    def __post_init__(self):
        t = np.asarray(self.transmittance, dtype=float)
        if t.ndim != 2 or t.size == 0:
            raise ConfigurationError("mask grid must be a non-empty 2-D array", key="mask")
        if np.any(~np.isfinite(t)) or t.min() < 0 or t.max() > 1:
            raise ConfigurationError("mask transmittance must lie in [0, 1]", key="mask")
        if not self.pixel_pitch > 0:
            raise ConfigurationError("mask pitch must be positive", key="mask.pitch")
        object.__setattr__(self, "transmittance", t)

    @property
    def shape(self) -> tuple[int, int]:
        return self.transmittance.shape

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper (x, y) corners of the grid in plane coordinates."""
        rows, cols = self.shape
        half = 0.5 * self.pixel_pitch * np.array([cols, rows], dtype=float)
        centre = np.asarray(self.origin, dtype=float)
        return centre - half, centre + half

    def to_index(self, rho) -> np.ndarray:
        """Plane coordinates (..., 2) -> fractional (col, row) cell indices."""
        rho = np.asarray(rho, dtype=float)
        rows, cols = self.shape
        centre = np.array([(cols - 1) / 2, (rows - 1) / 2])
        return (rho - np.asarray(self.origin)) / self.pixel_pitch + centre

    def transmittance_at(self, rho) -> np.ndarray:
        """Bilinear transmittance at ``rho``; zero outside the grid."""
        idx = self.to_index(rho)
        rows, cols = self.shape
        cx, cy = idx[..., 0], idx[..., 1]
        inside = (cx >= -0.5) & (cx < cols - 0.5) & (cy >= -0.5) & (cy < rows - 0.5)
        cx = np.clip(cx, 0, cols - 1)
        cy = np.clip(cy, 0, rows - 1)
        x0 = np.minimum(np.floor(cx).astype(np.intp), max(cols - 2, 0))
        y0 = np.minimum(np.floor(cy).astype(np.intp), max(rows - 2, 0))
        x1 = np.minimum(x0 + 1, cols - 1)
        y1 = np.minimum(y0 + 1, rows - 1)
        fx = cx - x0
        fy = cy - y0
        t = self.transmittance
        top = t[y0, x0] * (1 - fx) + t[y0, x1] * fx
        bottom = t[y1, x0] * (1 - fx) + t[y1, x1] * fx
        value = top * (1 - fy) + bottom * fy
        return np.where(inside, value, 0.0)

    def mean_transmittance(self, sigma: float, oversample: int = 2) -> float:
        """Mean transmittance seen by an isotropic Gaussian beam of stdev ``sigma``,
        conditioned on landing inside the grid."""
        lo, hi = self.bounds()
        rows, cols = self.shape
        step = self.pixel_pitch / oversample
        xs = lo[0] + step * (np.arange(cols * oversample) + 0.5)
        ys = lo[1] + step * (np.arange(rows * oversample) + 0.5)
        wx = np.exp(-0.5 * (xs / sigma) ** 2)
        wy = np.exp(-0.5 * (ys / sigma) ** 2)
        if wx.sum() == 0 or wy.sum() == 0:
            return 0.0
        gx, gy = np.meshgrid(xs, ys)
        t = self.transmittance_at(np.stack([gx, gy], axis=-1))
        return float(wy @ t @ wx / (wy.sum() * wx.sum()))


def make_pinhole_mask(diameter: float, pitch: float, grid=(64, 64), supersample: int = 8) -> ObjectMask:
    """Centred circular aperture; edge cells carry their area fraction."""
    if not diameter > 0 or not pitch > 0:
        raise ConfigurationError("pinhole diameter and pitch must be positive", key="mask.diameter")
    rows, cols = int(grid[0]), int(grid[1])
    if diameter > min(rows, cols) * pitch:
        raise ConfigurationError(
            f"pinhole diameter {diameter:g} m exceeds grid extent {min(rows, cols) * pitch:g} m",
            key="mask.diameter")
    r = diameter / 2
    sub = (np.arange(supersample) + 0.5) / supersample - 0.5
    ys = ((np.arange(rows) - (rows - 1) / 2)[:, None] + sub[None, :]).ravel() * pitch
    xs = ((np.arange(cols) - (cols - 1) / 2)[:, None] + sub[None, :]).ravel() * pitch
    inside = (xs[None, :] ** 2 + ys[:, None] ** 2) <= r * r
    frac = inside.reshape(rows, supersample, cols, supersample).mean(axis=(1, 3))
    return ObjectMask(frac, pitch, name=f"pinhole-{diameter * 1e6:g}um")


def load_mask(path, pitch: float) -> ObjectMask:
    """Load a grayscale PGM/PNG as a transmittance grid (value / maxval)."""
    path = Path(path)
    try:
        pixels, maxval = imageio.read_grayscale(path)
    except MaskFormatError as exc:
        raise MaskFormatError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise OSError(f"cannot read mask {path}: {exc.strerror or exc}") from exc
    if pixels.size == 0:
        raise MaskFormatError(f"{path}: zero-size image")
    return ObjectMask(pixels / maxval, pitch, name=path.name)


def mask_transmit(mask: ObjectMask, rho, rng: np.random.Generator):
    """Bernoulli pass/fail at the bilinear transmittance. Vectorized over leading axes."""
    p = mask.transmittance_at(rho)
    passed = rng.random(np.shape(p)) < p
    return bool(passed) if np.ndim(passed) == 0 else passed


@dataclass(frozen=True)
class BucketDetector:
    efficiency: float = 1.0
    max_trigger_rate_hz: float = 15e3

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ConfigurationError("bucket.efficiency must lie in [0, 1]", key="bucket.efficiency")
        if not self.max_trigger_rate_hz > 0:
            raise ConfigurationError("bucket.max_trigger_rate_hz must be positive",
                                     key="bucket.max_trigger_rate_hz")


def bucket_detect(passed, det: BucketDetector, rng: np.random.Generator):
    passed = np.asarray(passed, dtype=bool)
    fired = passed & (rng.random(passed.shape) < det.efficiency)
    return bool(fired) if fired.ndim == 0 else fired


@dataclass(frozen=True)
class IccdModel:
    sensor_px: tuple[int, int] = (512, 512)  # (width, height)
    pixel_pitch: float = 13e-6
    quantum_efficiency: float = 0.5
    blooming_sigma_px: float = 1.2
    photoelectron_gain_mean: float = 1000.0
    photoelectron_gain_sigma: float = 300.0
    dark_events_per_frame: float = 2.0
    read_noise_sigma: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "sensor_px", (int(self.sensor_px[0]), int(self.sensor_px[1])))
        if min(self.sensor_px) <= 0:
            raise ConfigurationError("iccd.sensor_px must be positive", key="iccd.sensor_px")
        if not self.pixel_pitch > 0:
            raise ConfigurationError("iccd.pixel_pitch must be positive", key="iccd.pixel_pitch")
        if not 0.0 <= self.quantum_efficiency <= 1.0:
            raise ConfigurationError("iccd.quantum_efficiency must lie in [0, 1]",
                                     key="iccd.quantum_efficiency")
        for name in ("blooming_sigma_px", "photoelectron_gain_mean", "photoelectron_gain_sigma",
                     "dark_events_per_frame", "read_noise_sigma"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"iccd.{name} must be non-negative", key=f"iccd.{name}")

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape (rows, cols)."""
        return self.sensor_px[1], self.sensor_px[0]

    def to_pixel(self, rho) -> np.ndarray:
        """Sensor-plane metres (..., 2) -> fractional (col, row) pixel indices."""
        w, h = self.sensor_px
        return np.asarray(rho, dtype=float) / self.pixel_pitch + np.array([(w - 1) / 2, (h - 1) / 2])

    def to_plane(self, px) -> np.ndarray:
        w, h = self.sensor_px
        return (np.asarray(px, dtype=float) - np.array([(w - 1) / 2, (h - 1) / 2])) * self.pixel_pitch

    def on_sensor(self, px) -> np.ndarray:
        w, h = self.sensor_px
        px = np.asarray(px, dtype=float)
        return ((px[..., 0] >= -0.5) & (px[..., 0] < w - 0.5)
                & (px[..., 1] >= -0.5) & (px[..., 1] < h - 0.5))


@dataclass(eq=False)
class Frame:
    values: np.ndarray
    exposure_s: float = 2.0
    meta: dict = field(default_factory=dict)


def detect_photons(positions, model: IccdModel, rng: np.random.Generator) -> np.ndarray:
    """Quantum-efficiency thinning; returns pixel coordinates of on-sensor photoelectrons."""
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    keep = rng.random(len(pos)) < model.quantum_efficiency
    px = model.to_pixel(pos[keep])
    return px[model.on_sensor(px)]


def _axis_weights(centres: np.ndarray, sigma: float, radius: int):
    base = np.rint(centres).astype(np.intp)
    offsets = np.arange(-radius, radius + 1)
    idx = base[:, None] + offsets[None, :]
    if sigma == 0:
        w = (idx == base[:, None]).astype(float)
    else:
        hi = (idx + 0.5 - centres[:, None]) / sigma
        lo = (idx - 0.5 - centres[:, None]) / sigma
        w = special.ndtr(hi) - special.ndtr(lo)
    return idx, w


def deposit_splats(values: np.ndarray, px: np.ndarray, masses: np.ndarray, sigma: float) -> None:
    """Add pixel-integrated Gaussian splats in place. Mass falling off-sensor is lost."""
    if len(px) == 0:
        return
    rows, cols = values.shape
    radius = int(np.ceil(4 * sigma)) + 1 if sigma > 0 else 0
    ix, wx = _axis_weights(px[:, 0], sigma, radius)
    iy, wy = _axis_weights(px[:, 1], sigma, radius)
    weights = wy[:, :, None] * wx[:, None, :] * masses[:, None, None]
    rr = np.broadcast_to(iy[:, :, None], weights.shape)
    cc = np.broadcast_to(ix[:, None, :], weights.shape)
    ok = (rr >= 0) & (rr < rows) & (cc >= 0) & (cc < cols)
    np.add.at(values, (rr[ok], cc[ok]), weights[ok])


def _gains(rng, n, model: IccdModel) -> np.ndarray:
    g = rng.normal(model.photoelectron_gain_mean, model.photoelectron_gain_sigma, size=n)
    return np.maximum(g, 0.0)


def render_frame(photoelectrons_px, model: IccdModel, rng: np.random.Generator,
                 exposure_s: float = 2.0) -> Frame:
    """Analog frame from photoelectron pixel positions: amplified splats, dark events, read noise."""
    px = np.asarray(photoelectrons_px, dtype=float).reshape(-1, 2)
    values = np.zeros(model.shape)
    deposit_splats(values, px, _gains(rng, len(px), model), model.blooming_sigma_px)
    n_dark = rng.poisson(model.dark_events_per_frame)
    w, h = model.sensor_px
    dark_px = rng.uniform([-0.5, -0.5], [w - 0.5, h - 0.5], size=(n_dark, 2))
    deposit_splats(values, dark_px, _gains(rng, n_dark, model), model.blooming_sigma_px)
    if model.read_noise_sigma > 0:
        values += rng.standard_normal(values.shape) * model.read_noise_sigma
    return Frame(values, exposure_s, {"photoelectrons": len(px), "dark_events": int(n_dark)})


def iccd_expose(accepted_photon_positions, model: IccdModel, rng: np.random.Generator,
                exposure_s: float = 2.0) -> Frame:
    """Expose one frame to photons at sensor-plane positions (metres)."""
    px = detect_photons(accepted_photon_positions, model, rng)
    return render_frame(px, model, rng, exposure_s)
