"""
Fixture condivise dei test.
"""
import logging

import numpy as np
import pytest

from sampler import NoiseSchedule, make_linear_schedule
from svbrdf import MaterialMaps


@pytest.fixture
def sched():
    """Schedule lineare di default (T=1000)."""
    return make_linear_schedule()


@pytest.fixture
def two_step_sched():
    # ᾱ = 0.64, 0.25: valori esatti in float
    return NoiseSchedule.from_betas([0.36, 0.609375])


@pytest.fixture
def logs_dir(tmp_path):
    d = tmp_path / "logs"
    d.mkdir()
    return d


@pytest.fixture
def material():
    rng = np.random.default_rng(7)
    h = w = 16
    return MaterialMaps(
        basecolor=rng.uniform(0.0, 1.0, (h, w, 3)),
        normal_xy=rng.uniform(-0.4, 0.4, (h, w, 2)),
        height=rng.uniform(0.0, 1.0, (h, w)),
        roughness=rng.uniform(0.1, 1.0, (h, w)),
        metalness=rng.uniform(0.0, 1.0, (h, w)),
        opacity=np.ones((h, w)),
    )


@pytest.fixture(autouse=True)
def _reset_logging():
    yield
    root = logging.getLogger()
    for h in list(root.handlers):
        if getattr(h, "_matgen_handler", False):
            root.removeHandler(h)
            h.close()
    events = logging.getLogger("matgen.run_events")
    for h in list(events.handlers):
        events.removeHandler(h)
        h.close()

# End conftest.py
