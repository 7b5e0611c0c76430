"""
Pytest configuration and shared fixtures for nikodym-lab tests.

This file provides:
- Builtin metric fixtures (flat, constant curvature, sogge_example, degenerate)
- Seeded random probe points
- Small experiment configurations writing into temporary directories
"""

import numpy as np
import pytest

from nikodym_lab.config import ExperimentConfig
from nikodym_lab.geometry.fermi import axis_chart
from nikodym_lab.geometry.metric import euclidean, ms_perturbation, sogge_example, space_form


@pytest.fixture
def flat():
    """Euclidean metric on the default cube."""
    return euclidean()


@pytest.fixture
def sphere():
    """Constant curvature +1 on the unit cube."""
    return space_form(1.0)


@pytest.fixture
def hyperbolic():
    """Constant curvature -1 on the unit cube."""
    return space_form(-1.0)


@pytest.fixture
def sogge():
    """Variably curved metric already in Fermi form about the x1-axis."""
    return sogge_example()


@pytest.fixture
def degenerate():
    """Degenerate perturbation with epsilon = 0.5."""
    return ms_perturbation(0.5)


@pytest.fixture(scope="session")
def sogge_chart():
    """
    Fermi chart about the x1-axis of sogge_example (alpha = 1).

    Session scoped: chart construction integrates the base geodesic and
    transports its frame once.
    """
    return axis_chart(sogge_example(), 1.0)


@pytest.fixture(scope="session")
def sphere_chart():
    """Fermi chart of space_form(1) about the x1-axis, centered in the unit cube."""
    return axis_chart(space_form(1.0), 1.0, start=(-0.5, 0.0, 0.0))


@pytest.fixture
def rng():
    """Seeded generator so failures are reproducible."""
    return np.random.default_rng(1234)


@pytest.fixture
def probe_points(rng):
    """100 random points in [-0.4, 0.4]^3."""
    return rng.uniform(-0.4, 0.4, (100, 3))


@pytest.fixture
def small_config(tmp_path):
    """
    Configuration with a short delta ladder writing into a temporary directory.

    Every delta is below alpha/4 and the ladder has three entries, the
    minimum a slope fit accepts with a confidence band.
    """
    return ExperimentConfig(deltas=[0.125, 0.0625, 0.03125], out=str(tmp_path / "results"), seed=7)
