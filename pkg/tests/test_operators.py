"""
Maximal Operator Test Suite

Test Coverage:
- Direction nets and their refinement
- Nikodym maximal function: constants, monotonicity, homogeneity, threads
- Scatter (fan) families
- Auxiliary and truncated operators over geodesics meeting gamma0
- Fold-adapted weights and the planar strip maximal function
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from nikodym_lab.errors import PreconditionError
from nikodym_lab.geometry.fermi import axis_chart
from nikodym_lab.geometry.metric import Box, euclidean
from nikodym_lab.maximal.grid import ScalarField
from nikodym_lab.maximal.operators import (
    auxiliary_max,
    build_fold_adapted_weights,
    cordoba_max_2d,
    default_net_size,
    direction_net_family,
    fan_family,
    fibonacci_directions,
    nikodym_max,
    smooth_bump,
    through_axis_family,
    truncated_max,
)
from nikodym_lab.maximal.tubes import Tube

DELTA = 0.1
POINTS = np.array([[0.0, 0.0, 0.0], [0.05, -0.1, 0.08]])


@pytest.fixture(scope="module")
def ones():
    return ScalarField.constant(Box.cube(0.5), DELTA / 2)


@pytest.fixture
def family(flat):
    return direction_net_family(flat, DELTA, 0.4, n_directions=12)


def _bump(field):
    return field.with_values(np.exp(-8.0 * np.sum(field.centers() ** 2, axis=-1)))


class TestDirectionNets:
    """Tests for Fibonacci direction nets."""

    def test_unit_vectors_on_upper_hemisphere(self):
        """Test that net directions are unit vectors with z >= 0."""
        net = fibonacci_directions(50)
        assert_allclose(np.linalg.norm(net, axis=1), 1.0)
        assert np.all(net[:, 2] >= 0.0)

    def test_default_net_size(self):
        """Test ceil(2 pi / delta^2) directions."""
        assert default_net_size(0.1) == 629

    def test_empty_net(self):
        """Test that a net with no directions is refused."""
        with pytest.raises(PreconditionError):
            fibonacci_directions(0)

    def test_refined_is_superset(self, family):
        """Test that refinement keeps every original direction."""
        finer = family.refined()
        assert len(finer.directions) == 3 * len(family.directions)
        assert_allclose(finer.directions[: len(family.directions)], family.directions)


class TestNikodymMax:
    """Tests for the gathered Nikodym maximal function."""

    def test_constant_field(self, flat, ones, family):
        """Test that f = 1 has f* = 1."""
        assert_allclose(nikodym_max(flat, ones, DELTA, family, POINTS), 1.0)

    def test_monotone_and_homogeneous(self, flat, ones, family):
        """Test |f| <= |g| implies f* <= g*, and (2f)* = 2 f*."""
        f = _bump(ones)
        small = nikodym_max(flat, f, DELTA, family, POINTS)
        large = nikodym_max(flat, ones, DELTA, family, POINTS)
        doubled = nikodym_max(flat, f.with_values(2 * f.values), DELTA, family, POINTS)
        assert np.all(small <= large + 1e-12)
        assert_allclose(doubled, 2 * small)

    def test_sup_bound(self, flat, ones, family):
        """Test f* <= sup |f|."""
        f = _bump(ones)
        assert np.all(nikodym_max(flat, f, DELTA, family, POINTS) <= f.lp_norm(math.inf) + 1e-12)

    def test_refinement_never_decreases(self, flat, ones, family):
        """Test that a superset net gives a pointwise larger sup."""
        f = _bump(ones)
        coarse = nikodym_max(flat, f, DELTA, family, POINTS)
        fine = nikodym_max(flat, f, DELTA, family.refined(), POINTS)
        assert np.all(fine >= coarse - 1e-12)

    def test_threads_match_serial(self, flat, ones, family):
        """Test that the thread pool returns the serial values in order."""
        f = _bump(ones)
        assert_allclose(
            nikodym_max(flat, f, DELTA, family, POINTS, threads=2),
            nikodym_max(flat, f, DELTA, family, POINTS),
        )

    def test_no_admissible_tube(self, flat, family):
        """Test that a point whose tubes all leave the grid is refused."""
        small = ScalarField.constant(Box.cube(0.15), DELTA / 2)
        with pytest.raises(PreconditionError):
            nikodym_max(flat, small, DELTA, family, np.zeros((1, 3)))


class TestFanFamily:
    """Tests for scatter families."""

    def test_fan_covers_tube_cells(self, flat, ones):
        """Test that fan tubes write their average onto the cells they cover."""
        fan = fan_family(flat, [0.0], [0.0, 0.3], 0.4, DELTA)
        result = nikodym_max(flat, ones, DELTA, fan)
        assert isinstance(result, ScalarField)
        assert set(np.unique(result.values)) == {0.0, 1.0}
        assert result.sample(np.array([[0.1, 0.0, 0.0]]))[0] == 1.0

    def test_fan_has_no_point_enumeration(self, flat):
        """Test that scatter families refuse per-point enumeration."""
        fan = fan_family(flat, [0.0], [0.0], 0.4, DELTA)
        with pytest.raises(PreconditionError):
            fan.tubes_through(np.zeros(3))


class TestMeetingOperators:
    """Tests for the auxiliary and truncated operators."""

    @pytest.fixture(scope="class")
    def flat_chart(self):
        return axis_chart(euclidean(), 1.0)

    @pytest.fixture(scope="class")
    def box_ones(self):
        return ScalarField.constant(Box.cube(1.5, center=(0.5, 0.0, 0.0)), DELTA / 2)

    def test_through_axis_heights(self, flat_chart):
        """Test heights on (0, alpha] and the upper half [alpha/2, alpha]."""
        full = through_axis_family(flat_chart.metric, flat_chart, DELTA, 1.0)
        upper = through_axis_family(flat_chart.metric, flat_chart, DELTA, 1.0, upper_half=True)
        assert full.heights[0] == pytest.approx(0.1)
        assert full.heights[-1] == pytest.approx(1.0)
        assert upper.heights[0] == pytest.approx(0.5)

    def test_unit_weight_on_constant(self, flat_chart, box_ones):
        """Test that beta = 0 reproduces the unit average of f = 1."""
        disc = np.array([[0.05, 0.0]])
        value = auxiliary_max(flat_chart.metric, flat_chart, box_ones, DELTA, 0.0, disc)
        assert_allclose(value, 1.0)

    def test_truncated_not_above_unit(self, flat_chart, box_ones):
        """Test that cutting the integrand near gamma0 never increases the average."""
        disc = np.array([[0.05, 0.0]])
        truncated = truncated_max(flat_chart.metric, flat_chart, box_ones, DELTA, 0.2, disc)
        assert np.all(truncated <= 1.0 + 1e-12)


class TestFoldWeights:
    """Tests for fold-adapted weight tables."""

    def test_smooth_bump_plateau_and_support(self):
        """Test bump = 1 on the plateau and 0 outside the support."""
        values = smooth_bump(np.array([0.0, 0.2, 0.3, 0.5, 0.8, 1.0]), (0.2, 0.8), (0.4, 0.6))
        assert_allclose(values[[0, 1, 4, 5]], 0.0)
        assert values[3] == 1.0
        assert 0.0 < values[2] < 1.0

    def test_branches_follow_rho(self):
        """Test that strong rho selects beta2 and weak rho selects beta1."""
        weights = build_fold_adapted_weights(None, lambda x1: np.sin(2 * np.pi * np.asarray(x1)), 0.5, 0.4, 0.2, 0.1)
        assert set(weights.branches) == {"beta1", "beta2"}
        assert 0.0 < weights.c0 <= 1.0

    def test_forward_half_only(self, flat):
        """Test that the weight vanishes for y1 < x1."""
        weights = build_fold_adapted_weights(None, lambda x1: np.ones_like(np.asarray(x1, dtype=float)), 0.5, 0.4, 0.2, 0.1)
        tube = Tube(flat, [[0.3, 0.0, 0.0], [0.7, 0.0, 0.0]], [[1.0, 0.0, 0.0]] * 2, DELTA, label={"x1": 0.5})
        points = np.array([[0.45, 0.0, 0.0], [0.5375, 0.0, 0.0]])
        assert weights.spec.evaluate(tube, points).tolist() == [0.0, 1.0]

    def test_measured_fraction_below_plateau_bound(self, flat):
        """Test that tube caps pull the measured plateau fraction below the one-dimensional bound."""
        weights = build_fold_adapted_weights(None, lambda x1: np.ones_like(np.asarray(x1, dtype=float)), 0.5, 0.4, 0.2, 0.2)
        delta = 0.05
        t = np.linspace(-0.5, 0.5, 81)
        tube = Tube(flat, np.column_stack([t, 0 * t, 0 * t]), np.tile([1.0, 0.0, 0.0], (81, 1)), delta, label={"x1": 0.0})
        grid = ScalarField.constant(Box.cube(0.6), delta / 4)
        measured = weights.measured_fraction(flat, [tube], grid)
        assert weights.c0 == pytest.approx(0.05, rel=0.01)
        assert measured < weights.c0
        assert measured == pytest.approx(0.05 / (1 + 4 * delta / 3), rel=0.05)

    def test_measured_fraction_needs_tubes(self, flat):
        """Test that an empty tube list is refused."""
        weights = build_fold_adapted_weights(None, np.sin, 0.5, 0.4, 0.2, 0.1)
        with pytest.raises(PreconditionError):
            weights.measured_fraction(flat, [], ScalarField.constant(Box.cube(0.5), DELTA / 2))

    def test_parameter_order_enforced(self):
        """Test that alpha2 <= alpha1 < alpha0 <= alpha/2 is required."""
        with pytest.raises(PreconditionError):
            build_fold_adapted_weights(None, np.sin, 0.5, 0.4, 0.1, 0.2)
        with pytest.raises(PreconditionError):
            build_fold_adapted_weights(None, np.sin, 0.0, 0.4, 0.2, 0.1)


class TestCordoba:
    """Tests for the planar strip maximal function."""

    def test_constant_gives_twice_alpha(self):
        """Test g* = 2 alpha for g = 1 (strip area 2 delta alpha over delta)."""
        values = np.ones((80, 80))
        result = cordoba_max_2d(values, (0.025, 0.025), (-1.0, -1.0), 0.05, 0.5, [0.0, 0.1])
        assert_allclose(result, 1.0, rtol=1e-9)

    def test_zero_outside_support(self):
        """Test that a strip far from the support of g sees nothing."""
        values = np.zeros((80, 80))
        values[:5, :5] = 1.0
        result = cordoba_max_2d(values, (0.025, 0.025), (-1.0, -1.0), 0.05, 0.5, [0.5])
        assert result[0] == 0.0
