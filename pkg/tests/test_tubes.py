"""
Geodesic Tube Test Suite

Test Coverage:
- Distance, membership and grid cells of tubes about straight lines
- Volumes and intersection volumes against closed forms
- Intersection angles, separation and TM-distance
- Weight specifications and tube averages
"""

import math

import numpy as np
import pytest

from nikodym_lab.errors import GridError, PreconditionError
from nikodym_lab.geometry.geodesic import integrate_segment
from nikodym_lab.geometry.metric import Box
from nikodym_lab.maximal.grid import ScalarField
from nikodym_lab.maximal.tubes import (
    Tube,
    WeightSpec,
    intersection_volume,
    near_axis_fraction,
    separation_check,
    tm_distance,
    tube_angle,
    tube_average,
    volume,
)

DELTA = 0.1


@pytest.fixture(scope="module")
def grid():
    """Euclidean grid on [-1/2, 1/2]^3 with spacing delta/8."""
    return ScalarField.constant(Box.cube(0.5), DELTA / 8)


def _line_tube(m, direction, center=(0.0, 0.0, 0.0), half=0.4, delta=DELTA, anchor=None):
    path = integrate_segment(m, np.asarray(center, dtype=float), np.asarray(direction, dtype=float), half)
    return Tube.from_path(path, delta, anchor=anchor)


class TestMembership:
    """Tests for distances and cell membership."""

    def test_distance_to_straight_center(self, flat):
        """Test that the distance to an x1-axis tube is the transverse norm."""
        tube = _line_tube(flat, [1.0, 0.0, 0.0])
        points = np.array([[0.1, 0.3, 0.4], [0.0, 0.05, 0.0], [0.6, 0.0, 0.0]])
        assert tube.distance(points) == pytest.approx([0.5, 0.05, 0.2])
        assert tube.contains(points).tolist() == [False, True, False]

    def test_length(self, flat):
        """Test that the center polyline has length 2 * half."""
        assert _line_tube(flat, [0.0, 1.0, 1.0]).length == pytest.approx(0.8)

    def test_cells_are_inside(self, flat, grid):
        """Test that every returned cell center lies within delta of the center."""
        tube = _line_tube(flat, [1.0, 1.0, 0.0], half=0.3)
        cells = tube.cells(grid)
        assert np.all(tube.distance(grid.centers(cells)) <= DELTA)

    def test_coarse_grid_refused(self, flat):
        """Test that a grid spacing above delta is a grid error."""
        coarse = ScalarField.constant(Box.cube(0.5), 0.25)
        with pytest.raises(GridError):
            _line_tube(flat, [1.0, 0.0, 0.0]).cells(coarse)

    def test_center_outside_grid(self, flat):
        """Test that a tube leaving the grid box is a grid error."""
        small = ScalarField.constant(Box.cube(0.2), 0.05)
        with pytest.raises(GridError):
            _line_tube(flat, [1.0, 0.0, 0.0]).cells(small)

    def test_tube_crossing_a_face_refused(self, flat, grid):
        """Test that a tube whose center stays inside but whose radius crosses a face is a grid error."""
        hugging = _line_tube(flat, [1.0, 0.0, 0.0], center=(0.0, 0.45, 0.0))
        assert np.all(np.abs(hugging.points) < 0.5)
        with pytest.raises(GridError, match="exits grid box"):
            hugging.cells(grid)

    def test_tube_touching_a_face_accepted(self, flat, grid):
        """Test that a tube ending exactly at a face keeps its full capsule of cells."""
        tube = _line_tube(flat, [0.0, 1.0, 0.0], center=(0.0, 0.0, 0.0))
        expected = math.pi * DELTA**2 * 0.8 + 4 / 3 * math.pi * DELTA**3
        assert tube.cells(grid).size * grid.cell_volume == pytest.approx(expected, rel=0.05)

    def test_nonpositive_radius(self, flat):
        """Test that delta <= 0 is refused."""
        with pytest.raises(PreconditionError):
            Tube(flat, np.zeros((2, 3)), np.tile([1.0, 0.0, 0.0], (2, 1)), 0.0)


class TestVolumes:
    """Tests for tube and intersection volumes."""

    def test_capsule_volume(self, flat, grid):
        """Test |T| = pi delta^2 L + 4/3 pi delta^3 for a straight tube."""
        tube = _line_tube(flat, [1.0, 0.0, 0.0])
        expected = math.pi * DELTA**2 * 0.8 + 4 / 3 * math.pi * DELTA**3
        assert volume(flat, tube, grid) == pytest.approx(expected, rel=0.05)

    def test_perpendicular_intersection(self, flat, grid):
        """Test the Steinmetz volume 16 delta^3 / 3 for perpendicular tubes."""
        first = _line_tube(flat, [1.0, 0.0, 0.0])
        second = _line_tube(flat, [0.0, 1.0, 0.0])
        assert intersection_volume(flat, first, second, grid) == pytest.approx(16 * DELTA**3 / 3, rel=0.1)

    def test_near_axis_fraction(self, flat, grid):
        """Test that a tube is entirely near its own axis."""
        tube = _line_tube(flat, [1.0, 0.0, 0.0])
        assert near_axis_fraction(flat, tube, tube, DELTA, grid) == pytest.approx(1.0)


class TestAngles:
    """Tests for intersection angles and the separation property."""

    def test_perpendicular_angle(self, flat, grid):
        """Test that perpendicular tubes meet at pi/2."""
        first = _line_tube(flat, [1.0, 0.0, 0.0])
        second = _line_tube(flat, [0.0, 0.0, 1.0])
        assert tube_angle(flat, first, second, grid) == pytest.approx(math.pi / 2)

    def test_disjoint_angle_is_infinite(self, flat, grid):
        """Test that tubes without common cells report an infinite angle."""
        first = _line_tube(flat, [1.0, 0.0, 0.0], center=(0.0, -0.3, 0.0))
        second = _line_tube(flat, [1.0, 0.0, 0.0], center=(0.0, 0.3, 0.0))
        assert tube_angle(flat, first, second, grid) == math.inf

    def test_separation_holds_for_transversal_tubes(self, flat, grid):
        """Test that transversal tubes intersect only near their crossing point."""
        first = _line_tube(flat, [1.0, 0.0, 0.0])
        second = _line_tube(flat, [1.0, 1.0, 0.0])
        report = separation_check(flat, first, second, (0.0, 0.0, 0.0), 0.8, grid)
        assert report["applies"] is True
        assert report["holds"] is True
        assert report["outside_cells"] == 0

    def test_separation_not_applicable_at_small_angle(self, flat, grid):
        """Test that nearly parallel tubes fall outside the hypothesis."""
        first = _line_tube(flat, [1.0, 0.0, 0.0])
        second = _line_tube(flat, [1.0, 0.05, 0.0])
        report = separation_check(flat, first, second, (0.0, 0.0, 0.0), 0.1, grid)
        assert report["applies"] is False
        assert report["holds"] is True


class TestTMDistance:
    """Tests for the unit-tangent-bundle distance."""

    def test_same_line_any_orientation(self, flat):
        """Test that a line is at distance zero from itself and its reversal."""
        tube = _line_tube(flat, [1.0, 0.0, 0.0])
        assert tm_distance(flat, tube, tube) == pytest.approx(0.0, abs=1e-12)
        assert tm_distance(flat, tube, tube.reversed()) == pytest.approx(0.0, abs=1e-12)

    def test_parallel_offset(self, flat):
        """Test that parallel lines are at their offset distance."""
        first = _line_tube(flat, [1.0, 0.0, 0.0])
        second = _line_tube(flat, [1.0, 0.0, 0.0], center=(0.0, 0.2, 0.0))
        assert tm_distance(flat, first, second) == pytest.approx(0.2)


class TestWeightsAndAverages:
    """Tests for weighted tube averages."""

    def test_average_of_constant(self, flat, grid):
        """Test that the unit-weight average of |1| is 1."""
        tube = _line_tube(flat, [1.0, 0.0, 0.0])
        assert tube_average(flat, tube, grid) == pytest.approx(1.0)

    def test_average_takes_absolute_value(self, flat, grid):
        """Test that averages integrate |f|."""
        tube = _line_tube(flat, [1.0, 0.0, 0.0])
        assert tube_average(flat, tube, grid.with_values(-2.0 * np.ones(grid.shape))) == pytest.approx(2.0)

    def test_damping_weight(self, flat):
        """Test a = dist(y, anchor)^beta."""
        tube = _line_tube(flat, [1.0, 0.0, 0.0], anchor=(0.0, 0.0, 0.0))
        points = np.array([[0.25, 0.0, 0.0], [0.0, 0.09, 0.0]])
        assert WeightSpec.damping(0.5).evaluate(tube, points) == pytest.approx([0.5, 0.3])

    def test_damping_needs_anchor(self, flat):
        """Test that damping without any anchor is refused."""
        tube = _line_tube(flat, [1.0, 0.0, 0.0])
        with pytest.raises(PreconditionError):
            WeightSpec.damping(0.5).evaluate(tube, np.zeros((1, 3)))

    def test_cutoff_weight(self, flat):
        """Test that the cutoff removes points near the reference tube."""
        tube = _line_tube(flat, [1.0, 0.0, 0.0])
        reference = _line_tube(flat, [0.0, 1.0, 0.0])
        points = np.array([[0.0, 0.0, 0.0], [0.3, 0.0, 0.0]])
        assert WeightSpec.cutoff(reference, 0.2).evaluate(tube, points).tolist() == [0.0, 1.0]

    def test_table_weight(self, flat, grid):
        """Test that a table weight of 0.5 halves the average."""
        tube = _line_tube(flat, [1.0, 0.0, 0.0])
        weight = WeightSpec.table(lambda t, p: np.full(p.shape[:-1], 0.5))
        assert tube_average(flat, tube, grid, weight) == pytest.approx(0.5)

    def test_monte_carlo_agrees_with_midpoint(self, flat, grid):
        """Test that seeded Monte Carlo quadrature matches on a smooth field."""
        field = ScalarField.from_function(grid.box, DELTA / 8, lambda p: 1 + p[..., 0] ** 2)
        tube = _line_tube(flat, [1.0, 0.0, 0.0])
        midpoint = tube_average(flat, tube, field)
        mc = tube_average(flat, tube, field, quadrature="mc", samples=20000, seed=3)
        assert mc == pytest.approx(midpoint, rel=0.02)

    def test_unknown_quadrature(self, flat, grid):
        """Test that an unknown quadrature name is refused."""
        with pytest.raises(PreconditionError):
            tube_average(flat, _line_tube(flat, [1.0, 0.0, 0.0]), grid, quadrature="simpson")
