"""Plane mapping and trigger timing.

The camera arm carries an image-preserving delay line that must cover the
electronic latency of the bucket detector and the intensifier trigger. Any
residual mismatch is trimmed with cable between the SPAD and the camera.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import constants, special

from .errors import ConfigurationError, DomainError

DELAY_LINE_LENGTH_M = 22.0


def delay_line_optical_delay(length: float) -> float:
    """Free-space propagation time over ``length`` metres."""
    if length < 0:
        raise DomainError(f"delay line length must be non-negative, got {length!r}")
    return length / constants.c


def nominal_cable_length(electronic_delay_s: float = 70e-9, cable_delay_per_m: float = 5e-9,
                         optical_delay_s: float | None = None) -> float:
    """Cable length that centres photon arrival in the gate."""
    if optical_delay_s is None:
        optical_delay_s = delay_line_optical_delay(DELAY_LINE_LENGTH_M)
    return (optical_delay_s - electronic_delay_s) / cable_delay_per_m


NOMINAL_CABLE_M = nominal_cable_length()


@dataclass(frozen=True)
class OpticalPath:
    """Camera-arm path. ``blur_sigma`` is the residual optical resolution (m, per axis)."""

    magnification: float = 1.0
    orientation_sign: int = 1
    optical_delay_s: float = delay_line_optical_delay(DELAY_LINE_LENGTH_M)
    transmission: float = 0.9
    blur_sigma: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.transmission <= 1.0:
            raise ConfigurationError("path.transmission must lie in [0, 1]", key="path.transmission")
        if self.optical_delay_s < 0:
            raise ConfigurationError("path.optical_delay_s must be non-negative",
                                     key="path.optical_delay_s")
        if self.orientation_sign not in (1, -1):
            raise ConfigurationError("path.orientation_sign must be +1 or -1",
                                     key="path.orientation_sign")
        if not self.magnification > 0:
            raise ConfigurationError("path.magnification must be positive", key="path.magnification")
        if self.blur_sigma < 0:
            raise ConfigurationError("path.blur_sigma must be non-negative", key="path.blur_sigma")


@dataclass(frozen=True)
class TimingModel:
    electronic_delay_s: float = 70e-9
    cable_delay_per_m: float = 5e-9
    cable_length_m: float = NOMINAL_CABLE_M
    gate_width_s: float = 5e-9
    photon_jitter_sigma_s: float = 0.5e-9

    def __post_init__(self):
        if not self.gate_width_s > 0:
            raise ConfigurationError("timing.gate_width_s must be positive", key="timing.gate_width_s")
        if not self.cable_delay_per_m > 0:
            raise ConfigurationError("timing.cable_delay_per_m must be positive",
                                     key="timing.cable_delay_per_m")
        if self.photon_jitter_sigma_s < 0:
            raise ConfigurationError("timing.photon_jitter_sigma_s must be non-negative",
                                     key="timing.photon_jitter_sigma_s")


def net_timing_offset(t: TimingModel, path: OpticalPath) -> float:
    """Trigger time minus photon arrival time; zero centres the photon in the gate."""
    trigger = t.electronic_delay_s + t.cable_delay_per_m * t.cable_length_m
    return trigger - path.optical_delay_s


def gate_accepts(delta_t: float, t: TimingModel, rng: np.random.Generator, size=None):
    """Boxcar gate with Gaussian arrival jitter.

    Returns a bool, or a boolean array when ``size`` is given.
    """
    jitter = rng.normal(0.0, 1.0, size=size) * t.photon_jitter_sigma_s
    accepted = np.abs(delta_t + jitter) <= t.gate_width_s / 2
    return bool(accepted) if size is None else accepted


def gate_acceptance_probability(delta_t: float, t: TimingModel) -> float:
    half = t.gate_width_s / 2
    s = t.photon_jitter_sigma_s
    if s == 0:
        return 1.0 if abs(delta_t) <= half else 0.0
    return float(special.ndtr((half - delta_t) / s) - special.ndtr((-half - delta_t) / s))


def orient(rho, sign: int):
    """Identity for +1, point reflection through the axis for -1."""
    if sign not in (1, -1):
        raise DomainError(f"orientation sign must be +1 or -1, got {sign!r}")
    rho = np.asarray(rho, dtype=float)
    return rho if sign == 1 else -rho

