"""Two-photon source model: correlation lengths, joint Gaussian state, pair sampling.

The transverse two-photon amplitude factorizes into a pump term of the
sum coordinate and a phase-matching term of the difference coordinate. In
the Gaussian approximation both are Gaussians, so the pair distribution in
the object and camera planes is fully described by a marginal width, a
conditional (correlation) width and the sign of the correlation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ConfigurationError, DomainError

# sinc(b q^2) ~ exp(-0.455 b q^2): the two agree at the 1/e point of the amplitude
SINC_GAUSS_FACTOR = 0.455

DEFAULT_GAMMA_POSITION = 1.83e-3
DEFAULT_GAMMA_MOMENTUM = 3.06e-3


class PlaneConfig(enum.Enum):
    POSITION = "position"
    MOMENTUM = "momentum"

    @classmethod
    def parse(cls, value: str | PlaneConfig) -> PlaneConfig:
        if isinstance(value, cls):
            return value
        v = str(value).strip().lower()
        aliases = {
            "position": cls.POSITION,
            "positioncorrelated": cls.POSITION,
            "image-plane": cls.POSITION,
            "momentum": cls.MOMENTUM,
            "momentumanticorrelated": cls.MOMENTUM,
            "far-field": cls.MOMENTUM,
        }
        try:
            return aliases[v]
        except KeyError:
            raise ConfigurationError(f"unknown plane mode {value!r}", key="plane.mode") from None


@dataclass(frozen=True)
class SpdcParams:
    """Source and optics constants, SI units."""

    lambda_pump: float = 355e-9
    lambda_down: float = 710e-9
    crystal_length: float = 3e-3
    pump_fwhm_intensity: float = 1.2e-3
    magnification: float = 3.0
    effective_focal: float = 0.300
    degenerate: bool = True

    def __post_init__(self):
        for name in ("lambda_pump", "lambda_down", "crystal_length",
                     "pump_fwhm_intensity", "magnification", "effective_focal"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ConfigurationError(f"spdc.{name} must be positive, got {value!r}",
                                         key=f"spdc.{name}")
        if self.degenerate and not math.isclose(self.lambda_down, 2 * self.lambda_pump,
                                                rel_tol=1e-12):
            raise ConfigurationError(
                "degenerate source requires lambda_down = 2 * lambda_pump",
                key="spdc.lambda_down")

    @property
    def k_pump(self) -> float:
        return 2 * math.pi / self.lambda_pump

    @property
    def k_down(self) -> float:
        return 2 * math.pi / self.lambda_down

    @property
    def pump_sigma_amplitude(self) -> float:
        # amplitude stdev of a Gaussian whose intensity FWHM is pump_fwhm_intensity
        return pump_amplitude_sigma(self.pump_fwhm_intensity)


def pump_amplitude_sigma(fwhm_intensity: float) -> float:
    return fwhm_intensity / (2 * math.sqrt(math.log(2)))


@dataclass(frozen=True)
class JointGaussian:
    gamma_marginal: float
    sigma_cond: float
    corr_sign: int

    def __post_init__(self):
        if self.corr_sign not in (1, -1):
            raise ConfigurationError("corr_sign must be +1 or -1")
        if self.gamma_marginal <= 0 or self.sigma_cond < 0:
            raise ConfigurationError("state widths must be positive")
        if not self.sigma_cond < self.gamma_marginal:
            raise ConfigurationError(
                f"sigma_cond ({self.sigma_cond:g}) must be smaller than "
                f"gamma_marginal ({self.gamma_marginal:g})", key="state.sigma_cond")

    @property
    def object_marginal(self) -> float:
        """Per-axis stdev of the object-plane coordinate."""
        return math.hypot(self.gamma_marginal, self.sigma_cond)


@dataclass(frozen=True)
class PairSample:
    rho_obj: np.ndarray
    rho_cam: np.ndarray
    t_emit: float


def _require_positive(**values):
    for name, v in values.items():
        if not v > 0:
            raise DomainError(f"{name} must be positive, got {v!r}")


def correlation_length_image_plane(L: float, lambda_pump: float, M: float) -> float:
    """Correlation length in the image plane, (M/sqrt 2) sqrt(0.455 L / k_p)."""
    _require_positive(L=L, lambda_pump=lambda_pump, M=M)
    k_p = 2 * math.pi / lambda_pump
    return M / math.sqrt(2) * math.sqrt(SINC_GAUSS_FACTOR * L / k_p)


def correlation_length_far_field(f_e: float, sigma_p_amplitude: float,
                                 lambda_down: float) -> float:
    """Correlation length in the far field, f_e / (sqrt 2 sigma_p k)."""
    _require_positive(f_e=f_e, sigma_p_amplitude=sigma_p_amplitude, lambda_down=lambda_down)
    k = 2 * math.pi / lambda_down
    return f_e / (math.sqrt(2) * sigma_p_amplitude * k)


def derive_joint_gaussian(params: SpdcParams, config: PlaneConfig | str,
                          gamma_marginal: float | None = None,
                          sigma_cond: float | None = None) -> JointGaussian:
    config = PlaneConfig.parse(config)
    if config is PlaneConfig.POSITION:
        gamma = DEFAULT_GAMMA_POSITION
        sigma = correlation_length_image_plane(params.crystal_length, params.lambda_pump,
                                               params.magnification)
        sign = 1
    else:
        gamma = DEFAULT_GAMMA_MOMENTUM
        sigma = correlation_length_far_field(params.effective_focal,
                                             params.pump_sigma_amplitude, params.lambda_down)
        sign = -1
    if gamma_marginal is not None:
        gamma = gamma_marginal
    if sigma_cond is not None:
        sigma = sigma_cond
    return JointGaussian(gamma, sigma, sign)


def sample_pairs(state: JointGaussian, rng: np.random.Generator, n: int,
                 frame_exposure: float = 1.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw ``n`` pairs; returns (rho_obj, rho_cam, t_emit) with shapes (n,2), (n,2), (n,)."""
    rho_cam = rng.normal(0.0, state.gamma_marginal, size=(n, 2))
    eps = rng.normal(0.0, 1.0, size=(n, 2)) * state.sigma_cond
    rho_obj = state.corr_sign * rho_cam + eps
    t_emit = rng.uniform(0.0, frame_exposure, size=n)
    return rho_obj, rho_cam, t_emit


def sample_pair(state: JointGaussian, rng: np.random.Generator,
                frame_exposure: float = 1.0) -> PairSample:
    rho_obj, rho_cam, t_emit = sample_pairs(state, rng, 1, frame_exposure)
    return PairSample(rho_obj[0], rho_cam[0], float(t_emit[0]))


def _truncated_normal(rng, n, sigma, lo, hi):
    # inverse-CDF draw restricted to [lo, hi]
    a, b = special.ndtr(lo / sigma), special.ndtr(hi / sigma)
    u = rng.uniform(a, b, size=n)
    u = np.clip(u, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
    return np.clip(special.ndtri(u) * sigma, lo, hi)


def window_probability(state: JointGaussian, lo: np.ndarray, hi: np.ndarray) -> float:
    """Probability that the object-plane coordinate falls in the box [lo, hi)."""
    s = state.object_marginal
    p = special.ndtr(np.asarray(hi) / s) - special.ndtr(np.asarray(lo) / s)
    return float(np.prod(p))


def sample_pairs_in_window(state: JointGaussian, rng: np.random.Generator, n: int,
                           lo, hi, frame_exposure: float = 1.0):
    """Draw ``n`` pairs conditioned on rho_obj lying in the box [lo, hi].

    Same joint law as :func:`sample_pairs` restricted to the box: rho_obj is
    drawn from its (truncated) marginal and rho_cam from the exact Gaussian
    conditional given rho_obj.
    """
    g2 = state.gamma_marginal ** 2
    s2 = state.sigma_cond ** 2
    s_obj = math.sqrt(g2 + s2)
    rho_obj = np.empty((n, 2))
    for axis in range(2):
        rho_obj[:, axis] = _truncated_normal(rng, n, s_obj, lo[axis], hi[axis])
    cond_mean = state.corr_sign * g2 / (g2 + s2) * rho_obj
    cond_sd = math.sqrt(g2 * s2 / (g2 + s2))
    rho_cam = cond_mean + rng.normal(0.0, 1.0, size=(n, 2)) * cond_sd
    t_emit = rng.uniform(0.0, frame_exposure, size=n)
    return rho_obj, rho_cam, t_emit


def epr_variance_product(sigma_pos_cam: float, sigma_mom_cam: float, M: float,
                         f_e: float, lambda_down: float) -> float:
    """Product of source-plane position and momentum variances, in units of hbar^2.

    Camera-plane widths are mapped back to the source: position through the
    magnification, momentum through k / f_e. Compare the result with 1/4.
    """
    _require_positive(sigma_pos_cam=sigma_pos_cam, sigma_mom_cam=sigma_mom_cam, M=M,
                      f_e=f_e, lambda_down=lambda_down)
    k = 2 * math.pi / lambda_down
    delta_pos = sigma_pos_cam / M
    delta_mom = k / f_e * sigma_mom_cam
    return (delta_pos * delta_mom) ** 2


def _fwhm_sigma(x: np.ndarray, intensity: np.ndarray) -> float:
    peak = int(np.argmax(intensity))
    half = intensity[peak] / 2

    def crossing(step):
        i = peak
        while 0 <= i + step < len(x) and intensity[i + step] >= half:
            i += step
        j = i + step
        # linear interpolation between i (above) and j (below)
        f = (intensity[i] - half) / (intensity[i] - intensity[j])
        return x[i] + f * (x[j] - x[i])

    return (crossing(1) - crossing(-1)) / (2 * math.sqrt(2 * math.log(2)))


def sinc_phase_matching_width(L: float, lambda_pump: float, n: int = 2 ** 20,
                              q_extent: float = 400.0) -> tuple[float, float]:
    """Width of the position-space phase-matching intensity, exact sinc vs Gaussian.

    Numerically Fourier transforms a 1-D cut of sinc(L q^2 / (4 k_p)) and
    returns ``(sinc_sigma, gaussian_sigma)``: the FWHM-equivalent stdev of the
    transformed intensity and the unit-magnification image-plane correlation
    length from the 0.455 Gaussian approximation.
    """
    _require_positive(L=L, lambda_pump=lambda_pump)
    k_p = 2 * math.pi / lambda_pump
    b = L / (4 * k_p)
    # work in units where b = 1, then rescale lengths by sqrt(b)
    q = np.linspace(-q_extent, q_extent, n, endpoint=False)
    dq = q[1] - q[0]
    amp = np.sinc(q ** 2 / np.pi)
    field = np.fft.fftshift(np.fft.fft(np.fft.ifftshift(amp))).real * dq
    x = np.fft.fftshift(np.fft.fftfreq(n, dq)) * 2 * np.pi
    sinc_sigma = _fwhm_sigma(x, field ** 2) * math.sqrt(b)
    return sinc_sigma, correlation_length_image_plane(L, lambda_pump, 1.0)
