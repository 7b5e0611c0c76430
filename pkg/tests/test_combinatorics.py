"""
Tube Combinatorics Test Suite

Test Coverage:
- Incidence tables between tube families and grid sets
- Multiplicity selection and its pigeonhole properties
- Bush extraction
"""

import numpy as np
import pytest

from nikodym_lab.errors import PreconditionError
from nikodym_lab.geometry.geodesic import integrate_segment
from nikodym_lab.geometry.metric import Box
from nikodym_lab.maximal.combinatorics import bush_extract, multiplicity_select, tube_incidence
from nikodym_lab.maximal.grid import ScalarField, region_field
from nikodym_lab.maximal.tubes import Tube

DELTA = 0.1
BUSH_DIRECTIONS = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, 1.0]]


@pytest.fixture
def full_set():
    """E = the whole cube [-1/2, 1/2]^3 at spacing delta/4."""
    return ScalarField.constant(Box.cube(0.5), DELTA / 4)


def _tubes(m, directions, centers=None):
    centers = centers or [(0.0, 0.0, 0.0)] * len(directions)
    return [
        Tube.from_path(integrate_segment(m, np.asarray(c, dtype=float), np.asarray(d, dtype=float), 0.3), DELTA)
        for c, d in zip(centers, directions)
    ]


class TestIncidence:
    """Tests for the tube/cell incidence table."""

    def test_coverage_counts_tubes(self, flat, full_set):
        """Test that the origin cell is covered by every tube of a bush."""
        inc = tube_incidence(flat, _tubes(flat, BUSH_DIRECTIONS), full_set)
        assert inc.coverage.max() == 4
        assert inc.in_e.all()
        assert inc.membership.shape == (4, inc.union.size)

    def test_tube_volume_matches_cells(self, flat, full_set):
        """Test that per-tube volumes sum the member cell weights."""
        tubes = _tubes(flat, BUSH_DIRECTIONS[:1])
        inc = tube_incidence(flat, tubes, full_set)
        assert inc.tube_volume(0) == pytest.approx(tubes[0].cells(full_set).size * full_set.cell_volume)


class TestMultiplicitySelect:
    """Tests for the multiplicity and scale selection."""

    def test_bush_has_low_multiplicity(self, flat, full_set):
        """Test N = 1 when tubes only share a small ball around their common point."""
        result = multiplicity_select(flat, full_set, _tubes(flat, BUSH_DIRECTIONS), DELTA, 1.0)
        assert result.N == 1
        assert result.low_multiplicity_holds

    def test_scales_are_dyadic(self, flat, full_set):
        """Test that theta and mu are delta times powers of two."""
        result = multiplicity_select(flat, full_set, _tubes(flat, BUSH_DIRECTIONS), DELTA, 1.0)
        for scale in (result.theta, result.mu):
            exponent = np.log2(scale / DELTA)
            assert exponent == pytest.approx(round(exponent))
        assert result.log_factor == pytest.approx(np.log2(1 / DELTA))

    def test_report_fields(self, flat, full_set):
        """Test the serialized selection report."""
        report = multiplicity_select(flat, full_set, _tubes(flat, BUSH_DIRECTIONS), DELTA, 1.0).to_dict()
        assert report["required_low"] == 2.0
        assert set(report) >= {"N", "theta", "mu", "incidence_count", "low_multiplicity_holds"}

    def test_density_precondition(self, flat):
        """Test that a tube with |E cap T| < lambda |T| is refused."""
        half = region_field(Box.cube(0.5), DELTA / 4, "x1 < 0")
        with pytest.raises(PreconditionError):
            multiplicity_select(flat, half, _tubes(flat, BUSH_DIRECTIONS[:1]), DELTA, 0.9)

    def test_zero_volume_tube_refused(self, flat, full_set, mocker):
        """Test that a tube whose cells carry no volume fails the density check instead of passing as nan."""
        mocker.patch.object(ScalarField, "cell_weights", return_value=np.zeros(int(np.prod(full_set.shape))))
        with pytest.raises(PreconditionError, match="zero Riemannian volume"):
            multiplicity_select(flat, full_set, _tubes(flat, BUSH_DIRECTIONS[:1]), DELTA, 0.9)
        with pytest.raises(PreconditionError, match="zero Riemannian volume"):
            bush_extract(flat, _tubes(flat, BUSH_DIRECTIONS[:1]), full_set)

    def test_empty_family(self, flat, full_set):
        """Test that an empty family is refused."""
        with pytest.raises(PreconditionError):
            multiplicity_select(flat, full_set, [], DELTA, 0.5)


class TestBush:
    """Tests for bush extraction."""

    def test_bush_point_and_multiplicity(self, flat, full_set):
        """Test that the most covered point of a bush is near its center."""
        result = bush_extract(flat, _tubes(flat, BUSH_DIRECTIONS), full_set)
        assert result.multiplicity == 4
        assert np.linalg.norm(result.point) <= DELTA
        assert result.min_density == pytest.approx(1.0)

    def test_disjoint_tubes(self, flat, full_set):
        """Test multiplicity 1 for parallel tubes far apart."""
        tubes = _tubes(flat, [[1.0, 0.0, 0.0]] * 2, centers=[(0.0, -0.3, 0.0), (0.0, 0.3, 0.0)])
        assert bush_extract(flat, tubes, full_set).multiplicity == 1

    def test_points_outside_e_are_ignored(self, flat):
        """Test that coverage only counts cells of E."""
        upper = region_field(Box.cube(0.5), DELTA / 4, "x3 > 0.2")
        result = bush_extract(flat, _tubes(flat, BUSH_DIRECTIONS), upper)
        assert result.point[2] > 0.2
        assert result.multiplicity < 4
