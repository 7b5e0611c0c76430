"""
Scalar Field Test Suite

Test Coverage:
- Grid layout, cell lookup and sampling
- Riemannian integrals, L^p norms and superlevel measures
- Binary persistence with JSON sidecars
- Region characteristic functions
"""

import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate

from nikodym_lab.errors import GridError
from nikodym_lab.geometry.metric import Box
from nikodym_lab.maximal.grid import ScalarField, region_field


@pytest.fixture
def unit_box():
    return Box([0.0, 0.0, 0.0], [1.0, 1.0, 1.0])


class TestLayout:
    """Tests for grid construction and indexing."""

    def test_spacing_rounded_to_divide_box(self, unit_box):
        """Test that a spacing of 0.3 becomes 4 cells of 0.25."""
        field = ScalarField.constant(unit_box, 0.3)
        assert field.shape == (4, 4, 4)
        assert_allclose(field.spacing, 0.25)
        assert_allclose(field.box.upper, unit_box.upper)

    def test_centers_and_cell_index(self, unit_box):
        """Test that every cell center maps back to its own cell."""
        field = ScalarField.constant(unit_box, 0.25)
        centers = field.centers().reshape(-1, 3)
        idx, inside = field.cell_index(centers)
        assert inside.all()
        assert_allclose(field.flat_index(idx), np.arange(64))

    def test_sample_outside_is_zero(self, unit_box):
        """Test nearest-cell lookup and the zero extension."""
        field = ScalarField.from_function(unit_box, 0.5, lambda p: p[..., 0])
        assert_allclose(field.sample(np.array([[0.1, 0.1, 0.1], [0.9, 0.2, 0.7], [1.5, 0.0, 0.0]])), [0.25, 0.75, 0.0])

    def test_invalid_values(self):
        """Test that non-3D values and non-positive spacing are refused."""
        with pytest.raises(GridError):
            ScalarField([0, 0, 0], 0.1, np.zeros((2, 2)))
        with pytest.raises(GridError):
            ScalarField([0, 0, 0], 0.0, np.zeros((2, 2, 2)))


class TestIntegrals:
    """Tests for Riemannian integrals and norms."""

    def test_flat_integral_of_linear_function(self, unit_box):
        """Test that the midpoint rule integrates x1 exactly."""
        field = ScalarField.from_function(unit_box, 0.1, lambda p: p[..., 0])
        assert field.integral() == pytest.approx(0.5)

    def test_sphere_volume(self, sphere):
        """Test the conformal volume of [-1/2, 1/2]^3 against adaptive quadrature."""
        box = Box.cube(0.5)
        field = ScalarField.constant(box, 0.05, metric=sphere)
        exact, _ = integrate.tplquad(
            lambda z, y, x: (1 + (x * x + y * y + z * z) / 4) ** -3,
            -0.5, 0.5, -0.5, 0.5, -0.5, 0.5,
        )
        assert field.integral() == pytest.approx(exact, rel=1e-3)

    def test_lp_norms(self, unit_box):
        """Test L^1, L^2 and L^inf of a two-valued field."""
        field = ScalarField.from_function(unit_box, 0.5, lambda p: np.where(p[..., 0] < 0.5, 2.0, -1.0))
        assert field.lp_norm(1) == pytest.approx(1.5)
        assert field.lp_norm(2) == pytest.approx(math.sqrt(2.5))
        assert field.lp_norm(math.inf) == 2.0
        with pytest.raises(GridError):
            field.lp_norm(0.5)

    def test_superlevel_measure(self, unit_box):
        """Test the volume of {f >= level}."""
        field = ScalarField.from_function(unit_box, 0.25, lambda p: p[..., 2])
        assert field.superlevel_measure(0.5) == pytest.approx(0.5)
        assert field.superlevel_measure(2.0) == 0.0

    def test_with_values_shares_grid(self, unit_box, sphere):
        """Test that with_values keeps the metric and cached weights."""
        field = ScalarField.constant(Box.cube(0.5), 0.25, metric=sphere)
        weights = field.cell_weights()
        other = field.with_values(np.zeros(field.shape))
        assert other.cell_weights() is weights
        assert other.integral() == 0.0


class TestPersistence:
    """Tests for the binary field format."""

    def test_save_load_preserves_grid(self, tmp_path, unit_box):
        """Test that values, origin and spacing survive a save/load cycle."""
        field = ScalarField.from_function(unit_box, 0.25, lambda p: p[..., 0] * p[..., 1])
        path = field.save(tmp_path / "fields" / "f.bin", description="product")
        loaded = ScalarField.load(path)
        assert_allclose(loaded.values, field.values)
        assert_allclose(loaded.origin, field.origin)
        assert_allclose(loaded.spacing, field.spacing)

    def test_sidecar_contents(self, tmp_path, unit_box):
        """Test the JSON sidecar written next to the binary file."""
        ScalarField.constant(unit_box, 0.5).save(tmp_path / "f.bin", description="ones")
        sidecar = json.loads((tmp_path / "f.bin.json").read_text())
        assert sidecar["shape"] == [2, 2, 2]
        assert sidecar["metric"] == "euclidean"
        assert sidecar["description"] == "ones"

    def test_binary_layout(self, tmp_path, unit_box):
        """Test the header size: three int64 dims and six float64 values."""
        ScalarField.constant(unit_box, 0.5).save(tmp_path / "f.bin")
        assert (tmp_path / "f.bin").stat().st_size == 72 + 8 * 8

    def test_truncated_file(self, tmp_path, unit_box):
        """Test that a truncated file is reported as a grid error."""
        path = ScalarField.constant(unit_box, 0.5).save(tmp_path / "f.bin")
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(GridError):
            ScalarField.load(path)


class TestRegionField:
    """Tests for characteristic functions of inequality regions."""

    def test_ball_volume(self):
        """Test that the unit-ball indicator integrates to about 4 pi / 3."""
        field = region_field(Box.cube(1.0), 0.05, "x1^2 + x2^2 + x3^2 <= 1")
        assert field.integral() == pytest.approx(4 * math.pi / 3, rel=1e-2)

    def test_values_are_indicators(self, unit_box):
        """Test that region fields only take the values 0 and 1."""
        field = region_field(unit_box, 0.25, ["x1 <= 0.5", "x2 > 0.5"])
        assert set(np.unique(field.values)) == {0.0, 1.0}
        assert field.integral() == pytest.approx(0.25)
