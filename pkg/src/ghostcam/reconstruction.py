"""Photon counting: threshold, label, filter, accumulate."""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import imageio

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)
MIN_EVENT_PIXELS = 2


@dataclass(frozen=True)
class PhotonEvent:
    centroid_px: tuple[float, float]  # (col, row)
    pixel_count: int
    total_mass: float


@dataclass
class GhostImage:
    counts: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def total_events(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: GhostImage) -> GhostImage:
        meta = {
            "frames": self.meta.get("frames", 0) + other.meta.get("frames", 0),
            "dropped": self.meta.get("dropped", 0) + other.meta.get("dropped", 0),
        }
        meta["total_events"] = int(self.counts.sum() + other.counts.sum())
        return GhostImage(self.counts + other.counts, meta)

    def save(self, path, extra_meta: dict | None = None) -> tuple[Path, Path]:
        """Write ``path`` (16-bit PGM) and a JSON sidecar with the same stem."""
        path = Path(path)
        if self.counts.max(initial=0) > 65535:
            raise ValueError("counts exceed the 16-bit PGM range")
        imageio.write_pgm(path, self.counts)
        meta_path = path.with_suffix(".json")
        meta = dict(self.meta)
        if extra_meta:
            meta.update(extra_meta)
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True))
        return path, meta_path

    @classmethod
    def load(cls, path) -> GhostImage:
        path = Path(path)
        pixels, _ = imageio.read_pgm(path)
        meta_path = path.with_suffix(".json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        return cls(pixels.astype(np.int64), meta)


def threshold_frame(frame, theta: float) -> np.ndarray:
    values = getattr(frame, "values", frame)
    if theta < 0:
        raise ValueError("threshold must be non-negative")
    return np.asarray(values) > theta


def extract_events(binary: np.ndarray, analog: np.ndarray) -> list[PhotonEvent]:
    """8-connected components of ``binary``; single-pixel components are discarded."""
    binary = np.asarray(binary, dtype=bool)
    analog = np.asarray(getattr(analog, "values", analog), dtype=float)
    if binary.shape != analog.shape:
        raise ValueError("binary and analog grids differ in shape")
    labels, n = ndimage.label(binary, structure=EIGHT_CONNECTED)
    if n == 0:
        return []
    flat = labels.ravel()
    sizes = np.bincount(flat, minlength=n + 1)[1:]
    weights = np.where(binary, analog, 0.0).ravel()
    rows, cols = np.indices(binary.shape)
    mass = np.bincount(flat, weights=weights, minlength=n + 1)[1:]
    mr = np.bincount(flat, weights=weights * rows.ravel(), minlength=n + 1)[1:]
    mc = np.bincount(flat, weights=weights * cols.ravel(), minlength=n + 1)[1:]
    events = []
    for k in np.flatnonzero(sizes >= MIN_EVENT_PIXELS):
        if mass[k] > 0:
            centroid = (mc[k] / mass[k], mr[k] / mass[k])
        else:
            # degenerate analog data: fall back to the geometric centre
            rr, cc = np.nonzero(labels == k + 1)
            centroid = (cc.mean(), rr.mean())
        events.append(PhotonEvent((float(centroid[0]), float(centroid[1])), int(sizes[k]),
                                  float(mass[k])))
    return events


def accumulate(events_per_frame, dims) -> GhostImage:
    """Sum events into a counts image of shape ``dims`` = (rows, cols)."""
    rows, cols = int(dims[0]), int(dims[1])
    counts = np.zeros((rows, cols), dtype=np.int64)
    frames = dropped = total = 0
    for events in events_per_frame:
        frames += 1
        for ev in events:
            total += 1
            c, r = int(np.rint(ev.centroid_px[0])), int(np.rint(ev.centroid_px[1]))
            if 0 <= r < rows and 0 <= c < cols:
                counts[r, c] += 1
            else:
                dropped += 1
    return GhostImage(counts, {"frames": frames, "total_events": total - dropped,
                               "dropped": dropped})


def default_theta(read_noise_sigma: float) -> float:
    return 5.0 * read_noise_sigma


def frame_events(frame, theta: float) -> list[PhotonEvent]:
    return extract_events(threshold_frame(frame, theta), frame.values)


def _events_chunk(stack, indices, theta):
    return [frame_events(stack[i], theta) for i in indices]


def reconstruct(stack, theta: float | None = None, workers: int = 1, progress=None) -> GhostImage:
    """Photon-count every frame of ``stack`` and sum into a ghost image.

    Frames are rendered, reduced to events and dropped one at a time.
    """
    if theta is None:
        theta = default_theta(stack.iccd.read_noise_sigma)
    n = len(stack)

    def per_frame():
        if workers <= 1 or n < 2:
            for i in range(n):
                yield frame_events(stack[i], theta)
                if progress:
                    progress(i + 1, n)
            return
        size = max(1, -(-n // (workers * 4)))
        chunks = [range(i, min(i + size, n)) for i in range(0, n, size)]
        done = 0
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_events_chunk, [stack] * len(chunks), chunks,
                                 [theta] * len(chunks)):
                yield from part
                done += len(part)
                if progress:
                    progress(done, n)

    image = accumulate(per_frame(), stack.iccd.shape)
    image.meta["theta"] = theta
    return image
