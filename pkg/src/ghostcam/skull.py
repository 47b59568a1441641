"""Skull test object.

The shipped bitmap ``data/skull.pgm`` is produced by :func:`draw_skull`;
regenerate it with ``python -m ghostcam.skull``. The outline is 4 mm tall,
the jaw has straight vertical sides and a straight lower edge for edge-based
resolution measurements.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .detection import ObjectMask, load_mask
from .imageio import write_pgm

SKULL_PITCH = 12.5e-6
SKULL_GRID = 400


def draw_skull(n: int = SKULL_GRID, pitch: float = SKULL_PITCH, supersample: int = 4) -> np.ndarray:
    """Transmittance grid (rows, cols); rows grow with +y (downwards in the bitmap)."""
    sub = (np.arange(supersample) + 0.5) / supersample - 0.5
    c = ((np.arange(n) - (n - 1) / 2)[:, None] + sub[None, :]).ravel() * pitch * 1e3  # mm
    x, y = np.meshgrid(c, c)

    cranium = (x / 1.55) ** 2 + ((y + 0.7) / 1.7) ** 2 <= 1
    jaw = (np.abs(x) <= 1.0) & (y >= 0.2) & (y <= 1.6)
    shape = cranium | jaw

    eyes = ((np.abs(x) - 0.6) / 0.38) ** 2 + ((y + 0.35) / 0.32) ** 2 <= 1
    nose = (y >= 0.05) & (y <= 0.55) & (np.abs(x) <= 0.22 * (y - 0.05) / 0.5)
    mouth = (y >= 1.05) & (y <= 1.13) & (np.abs(x) <= 0.8)
    teeth_gaps = (y > 1.13) & (y <= 1.25) & (np.abs(x) <= 0.8) & (
        np.min(np.abs(x[..., None] - np.array([-0.6, -0.3, 0.0, 0.3, 0.6])), axis=-1) <= 0.035)
    holes = eyes | nose | mouth | teeth_gaps

    fine = (shape & ~holes).astype(float)
    return fine.reshape(n, supersample, n, supersample).mean(axis=(1, 3))


def skull_path() -> Path:
    return Path(str(resources.files("ghostcam") / "data" / "skull.pgm"))


def skull_mask(pitch: float = SKULL_PITCH) -> ObjectMask:
    mask = load_mask(skull_path(), pitch)
    return ObjectMask(mask.transmittance, pitch, name="skull")


if __name__ == "__main__":
    out = Path(__file__).with_name("data") / "skull.pgm"
    write_pgm(out, draw_skull() * 255, maxval=255)
    print(f"wrote {out}")
