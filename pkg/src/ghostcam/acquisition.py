"""Triggered acquisition: pair generation, heralding, gating and frame exposure.

Every frame owns two random streams derived from ``(master_seed, frame_index)``:
one for the heralding stage (pairs, mask, bucket, gate, quantum efficiency)
and one for rendering the analog frame. Results are therefore independent of
how frames are scheduled across workers.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .detection import (BucketDetector, Frame, IccdModel, ObjectMask, bucket_detect,
                        detect_photons, mask_transmit, render_frame)
from .errors import ConfigurationError
from .optics import (OpticalPath, TimingModel, gate_acceptance_probability, gate_accepts,
                     net_timing_offset, orient)
from .spdc import (JointGaussian, PlaneConfig, SpdcParams, derive_joint_gaussian,
                   sample_pairs_in_window, window_probability)

log = logging.getLogger(__name__)

DEFAULT_TRIGGER_RATE = {PlaneConfig.POSITION: 15e3, PlaneConfig.MOMENTUM: 10e3}


@dataclass(frozen=True)
class ExperimentConfig:
    plane: PlaneConfig
    mask: ObjectMask
    spdc: SpdcParams = field(default_factory=SpdcParams)
    gamma_override: float | None = None
    sigma_override: float | None = None
    bucket: BucketDetector = field(default_factory=BucketDetector)
    iccd: IccdModel = field(default_factory=IccdModel)
    timing: TimingModel = field(default_factory=TimingModel)
    path: OpticalPath = field(default_factory=OpticalPath)
    frames: int = 1800
    exposure_s: float = 2.0
    trigger_rate_hz: float | None = None
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "plane", PlaneConfig.parse(self.plane))
        if self.trigger_rate_hz is None:
            object.__setattr__(self, "trigger_rate_hz", DEFAULT_TRIGGER_RATE[self.plane])
        if self.frames < 1:
            raise ConfigurationError("run.frames must be at least 1", key="run.frames")
        if not self.exposure_s > 0:
            raise ConfigurationError("run.exposure_s must be positive", key="run.exposure_s")
        if not self.trigger_rate_hz > 0:
            raise ConfigurationError("run.trigger_rate_hz must be positive", key="run.trigger_rate_hz")
        if self.trigger_rate_hz > self.bucket.max_trigger_rate_hz:
            raise ConfigurationError(
                f"trigger rate {self.trigger_rate_hz:g} Hz exceeds bucket ceiling "
                f"{self.bucket.max_trigger_rate_hz:g} Hz", key="run.trigger_rate_hz")
        self.state  # validates overrides

    @property
    def state(self) -> JointGaussian:
        return derive_joint_gaussian(self.spdc, self.plane, self.gamma_override, self.sigma_override)

    @property
    def image_sign(self) -> int:
        """Orientation of the ghost image on the sensor relative to the object."""
        return self.state.corr_sign * self.path.orientation_sign

    @property
    def camera_survival(self) -> float:
        """Probability that a heralded photon yields a photoelectron (gate, path, QE)."""
        g = gate_acceptance_probability(net_timing_offset(self.timing, self.path), self.timing)
        return g * self.path.transmission * self.iccd.quantum_efficiency


@dataclass
class RunStats:
    total_triggers: int
    total_detected_photons: int
    per_frame_detected: list[int]
    per_frame_triggers: list[int] = field(default_factory=list)

    @property
    def heralding_efficiency(self) -> float | None:
        if self.total_triggers == 0:
            return None
        return self.total_detected_photons / self.total_triggers

    def to_dict(self) -> dict:
        return {
            "total_triggers": self.total_triggers,
            "total_detected_photons": self.total_detected_photons,
            "heralding_efficiency": self.heralding_efficiency,
            "per_frame_detected": list(self.per_frame_detected),
            "per_frame_triggers": list(self.per_frame_triggers),
        }


def frame_seeds(master_seed: int, index: int) -> tuple[np.random.SeedSequence, np.random.SeedSequence]:
    ss = np.random.SeedSequence(master_seed, spawn_key=(index,))
    herald, render = ss.spawn(2)
    return herald, render


class FrameStack:
    """Lazily rendered analog frames.

    Holds the photoelectron positions of every frame; the analog frame
    (splats, dark events, read noise) is rendered on access and is
    identical on every access.
    """

    def __init__(self, photoelectrons: list[np.ndarray], iccd: IccdModel, exposure_s: float,
                 master_seed: int, first_index: int = 0):
        self.photoelectrons = photoelectrons
        self.iccd = iccd
        self.exposure_s = exposure_s
        self.master_seed = master_seed
        self.first_index = first_index

    def __len__(self) -> int:
        return len(self.photoelectrons)

    def __getitem__(self, i: int) -> Frame:
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        _, render_ss = frame_seeds(self.master_seed, self.first_index + i)
        frame = render_frame(self.photoelectrons[i], self.iccd, np.random.default_rng(render_ss),
                             self.exposure_s)
        frame.meta["index"] = self.first_index + i
        return frame

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def concat(self, other: FrameStack) -> FrameStack:
        """Concatenate two stacks that were rendered from consecutive frame ranges."""
        if (other.master_seed != self.master_seed or other.iccd != self.iccd
                or other.first_index != self.first_index + len(self)):
            raise ValueError("stacks are not consecutive ranges of the same run")
        return FrameStack(self.photoelectrons + other.photoelectrons, self.iccd, self.exposure_s,
                          self.master_seed, self.first_index)


@dataclass(frozen=True)
class _HeraldPlan:
    cfg: ExperimentConfig
    state: JointGaussian
    lo: np.ndarray
    hi: np.ndarray
    mean_candidates: float
    delta_t: float


def _plan(cfg: ExperimentConfig) -> _HeraldPlan:
    state = cfg.state
    lo, hi = cfg.mask.bounds()
    # Only pairs whose object photon lands on the mask grid can herald. The
    # candidate rate is scaled so triggers average trigger_rate_hz * exposure_s.
    trigger_prob = cfg.mask.mean_transmittance(state.object_marginal) * cfg.bucket.efficiency
    if trigger_prob <= 0 or window_probability(state, lo, hi) <= 0:
        mean_candidates = 0.0
    else:
        mean_candidates = cfg.trigger_rate_hz * cfg.exposure_s / trigger_prob
    return _HeraldPlan(cfg, state, lo, hi, mean_candidates,
                       net_timing_offset(cfg.timing, cfg.path))


def _herald_frame(plan: _HeraldPlan, index: int) -> tuple[int, np.ndarray]:
    cfg = plan.cfg
    herald_ss, _ = frame_seeds(cfg.master_seed, index)
    rng = np.random.default_rng(herald_ss)
    n = rng.poisson(plan.mean_candidates)
    rho_obj, rho_cam, _ = sample_pairs_in_window(plan.state, rng, n, plan.lo, plan.hi,
                                                 cfg.exposure_s)
    passed = mask_transmit(cfg.mask, rho_obj, rng)
    fired = bucket_detect(passed, cfg.bucket, rng)
    triggers = int(fired.sum())
    cam = orient(rho_cam[fired], cfg.path.orientation_sign) * cfg.path.magnification
    if cfg.path.blur_sigma > 0:
        cam = cam + rng.normal(0.0, 1.0, size=cam.shape) * cfg.path.blur_sigma
    transmitted = rng.random(triggers) < cfg.path.transmission
    in_gate = gate_accepts(plan.delta_t, cfg.timing, rng, size=triggers)
    photoelectrons = detect_photons(cam[transmitted & in_gate], cfg.iccd, rng)
    return triggers, photoelectrons


def _herald_chunk(plan: _HeraldPlan, indices: range):
    return [_herald_frame(plan, i) for i in indices]


def _chunks(n: int, workers: int, start: int = 0) -> list[range]:
    size = max(1, -(-n // (workers * 4)))
    return [range(i, min(i + size, start + n)) for i in range(start, start + n, size)]


def run_experiment(cfg: ExperimentConfig, workers: int = 1, frame_range: range | None = None,
                   progress=None) -> tuple[FrameStack, RunStats]:
    """Simulate ``cfg.frames`` triggered exposures.

    Returns the lazily rendered analog frames and the heralding statistics.
    ``frame_range`` selects a sub-range of frame indices (for splitting a run).
    """
    if frame_range is None:
        frame_range = range(cfg.frames)
    plan = _plan(cfg)
    results: list[tuple[int, np.ndarray]] = []
    if workers <= 1 or len(frame_range) < 2:
        for i in frame_range:
            results.append(_herald_frame(plan, i))
            if progress:
                progress(len(results), len(frame_range))
    else:
        chunks = _chunks(len(frame_range), workers, frame_range.start)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_herald_chunk, [plan] * len(chunks), chunks):
                results.extend(part)
                if progress:
                    progress(len(results), len(frame_range))
    triggers = [t for t, _ in results]
    detected = [len(pe) for _, pe in results]
    stack = FrameStack([pe for _, pe in results], cfg.iccd, cfg.exposure_s, cfg.master_seed,
                       frame_range.start)
    stats = RunStats(int(sum(triggers)), int(sum(detected)), detected, triggers)
    log.debug("run: %d frames, %d triggers, %d photoelectrons", len(results),
              stats.total_triggers, stats.total_detected_photons)
    return stack, stats


@dataclass
class DelayPoint:
    delta_m: float
    delta_t_s: float
    image: object  # GhostImage
    detected_count: int
    stats: RunStats


def run_delay_scan(cfg: ExperimentConfig, cable_deltas_m, frames: int | None = None,
                   theta: float | None = None, workers: int = 1) -> list[DelayPoint]:
    """Repeat a run for each cable-length change relative to ``cfg.timing``."""
    from .reconstruction import reconstruct

    deltas = [float(d) for d in cable_deltas_m]
    if not deltas:
        raise ConfigurationError("delay scan needs at least one cable delta", key="deltas")
    points = []
    for d in deltas:
        timing = replace(cfg.timing, cable_length_m=cfg.timing.cable_length_m + d)
        run_cfg = replace(cfg, timing=timing, frames=frames or cfg.frames)
        stack, stats = run_experiment(run_cfg, workers=workers)
        image = reconstruct(stack, theta=theta, workers=workers)
        points.append(DelayPoint(d, net_timing_offset(timing, cfg.path), image,
                                 image.total_events, stats))
    return points


def calibrate_efficiencies(target_eta: float | None, target_photons_per_frame: float | None,
                           cfg: ExperimentConfig) -> ExperimentConfig:
    """Choose quantum efficiency and path transmission so heralding matches the targets.

    The lumped survival ``p = photons_per_frame / (trigger_rate * exposure)``
    (or ``target_eta`` if no photon target is given) is assigned to the camera
    quantum efficiency, keeping the path transmission, unless that would need
    QE > 1.
    """
    if target_photons_per_frame is not None:
        if not target_photons_per_frame > 0:
            raise ConfigurationError("target photons per frame must be positive",
                                     key="calibration.target_photons_per_frame")
        p = target_photons_per_frame / (cfg.trigger_rate_hz * cfg.exposure_s)
        if target_eta is not None and abs(p - target_eta) > 0.25 * target_eta:
            log.warning("photon target implies eta=%.3g, far from requested %.3g", p, target_eta)
    elif target_eta is not None:
        if not target_eta > 0:
            raise ConfigurationError("target eta must be positive", key="calibration.target_eta")
        p = target_eta
    else:
        raise ConfigurationError("calibration needs a photon or efficiency target",
                                 key="calibration")
    if not 0 < p < 1:
        raise ConfigurationError(f"infeasible survival probability {p:g}", key="calibration")
    gate = gate_acceptance_probability(net_timing_offset(cfg.timing, cfg.path), cfg.timing)
    if p > gate:
        raise ConfigurationError(f"survival {p:g} exceeds gate acceptance {gate:g}",
                                 key="calibration")
    transmission = cfg.path.transmission
    qe = p / (gate * transmission) if transmission > 0 else float("inf")
    if qe > 1:
        qe, transmission = 1.0, p / gate
    return replace(cfg, iccd=replace(cfg.iccd, quantum_efficiency=qe),
                   path=replace(cfg.path, transmission=transmission))

