import functools

import numpy as np
import pytest

from ghostcam.config import load_settings, with_overrides
from ghostcam.pipeline import simulate


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@functools.lru_cache(maxsize=None)
def preset_run(name: str, frames: int | None = None):
    """Shared (settings, image, stats, metrics) for a preset; cached across test modules."""
    settings = load_settings(name)
    if frames is not None:
        settings = with_overrides(settings, frames=frames)
    image, stats, metrics = simulate(settings)
    return settings, image, stats, metrics


@pytest.fixture(scope="session")
def run_preset():
    return preset_run


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
