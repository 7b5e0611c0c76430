"""
Canonical Relation Test Suite

Test Coverage:
- Tau series calculus and the exact fold identities
- Analytic Jacobians of the model maps against finite differences
- Singular loci, fold Hessians and their classification
- Leading-term verification on chaotic and flat profiles
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from nikodym_lab.canonical import (
    FOLD,
    NOT_A_FOLD,
    CallableMap,
    ModelMap,
    TauSeries,
    affine_family,
    constant_family,
    family_from_metric,
    find_singular_locus,
    fold_hessian,
    fold_identity_residuals,
    p_series,
    predicted_singular_xi1,
    quadratic_family,
    rank_margin,
    shifted_sine_family,
    verify_fold_leading_terms,
)
from nikodym_lab.errors import PreconditionError

X1 = np.array([-0.3, 0.0, 0.2, 0.4])


class TestTauSeries:
    """Tests for polynomial series in tau = y1 - x1."""

    def test_p_for_constant_rho(self):
        """Test p = -rho tau^3 / 12 when rho is constant."""
        family = constant_family(2.0)
        assert p_series().evaluate(family, 0.1, 0.3) == pytest.approx(-2.0 * 0.2**3 / 12)

    def test_x1_derivative_of_tau(self):
        """Test d/dx1 tau^2 = -2 tau."""
        series = TauSeries([[0.0, 0.0, 1.0]])
        assert series.d_x1().evaluate(constant_family(1.0), 0.0, 0.5) == pytest.approx(-1.0)

    def test_order_exceeds_family(self, sogge):
        """Test that a series needing rho'''' is refused for a metric family."""
        series = TauSeries(np.eye(5))
        with pytest.raises(PreconditionError):
            series.evaluate(family_from_metric(sogge, 0.3), 0.1, 0.2)

    def test_arithmetic(self):
        """Test that subtraction pads and cancels coefficients."""
        p = p_series()
        assert np.all((p - p).coeffs == 0.0)


class TestFoldIdentities:
    """Tests for the exact second-derivative identities."""

    def test_affine_residual_vanishes(self):
        """Test that both identities hold exactly for affine rho."""
        family = affine_family(0.7, -0.4)
        r1, r2 = fold_identity_residuals(family, X1, X1 + 0.08)
        assert np.max(np.abs(r1)) <= 1e-12
        assert np.max(np.abs(r2)) <= 1e-12

    def test_quadratic_residual_is_second_order(self):
        """Test residuals -7/12 rho'' tau^2 and rho'' tau^2 / 2 for quadratic rho."""
        family = quadratic_family(0.3, 0.5, 0.8)
        for tau in (0.1, 0.05):
            r1, r2 = fold_identity_residuals(family, X1, X1 + tau)
            assert_allclose(r1, -7 / 12 * 1.6 * tau**2, atol=1e-14)
            assert_allclose(r2, 0.5 * 1.6 * tau**2, atol=1e-14)

    def test_metric_family_matches_closed_form(self, sogge):
        """Test that rho and rho' read from sogge_example match sin(2 psi - x1)."""
        psi = 0.6
        from_metric = family_from_metric(sogge, psi).jets(X1, 1)
        closed = shifted_sine_family(psi).jets(X1, 1)
        assert_allclose(from_metric, closed, atol=1e-6)


class TestModelMaps:
    """Tests for the reduced projection maps."""

    def test_right_jacobian_against_finite_differences(self):
        """Test the analytic right-map Jacobian."""
        model = ModelMap("right", shifted_sine_family(0.4), y1=0.15, xi=(0.3, 1.0))
        v = np.array([0.1, 0.03, -0.02])
        assert_allclose(model.jacobian(v), CallableMap(model).jacobian(v), atol=1e-6)

    def test_left_jacobian_against_finite_differences(self):
        """Test the analytic left-map Jacobian."""
        model = ModelMap("left", shifted_sine_family(0.4), x=(0.1, 0.5, -0.7))
        v = np.array([0.6, 0.8, 0.16])
        assert_allclose(model.jacobian(v), CallableMap(model).jacobian(v), atol=1e-6)

    def test_invalid_construction(self):
        """Test missing parameters and unknown kinds."""
        family = constant_family(1.0)
        with pytest.raises(ValueError):
            ModelMap("middle", family)
        with pytest.raises(ValueError):
            ModelMap("right", family, y1=0.1)
        with pytest.raises(ValueError):
            ModelMap("left", family)


class TestSingularLocus:
    """Tests for singular points and fold Hessians."""

    def test_predicted_xi1_for_constant_rho(self):
        """Test xi1 = -rho tau^2 / 12 when rho is constant."""
        z1, y1 = np.array([0.0, 0.1, -0.2]), np.array([0.05, 0.2, -0.1])
        tau = y1 - z1
        assert_allclose(predicted_singular_xi1(constant_family(2.0), z1, y1), -2.0 * tau**2 / 12, atol=1e-15)
        assert_allclose(predicted_singular_xi1(constant_family(0.0), z1, y1), 0.0)

    @pytest.fixture
    def right_point(self):
        model = ModelMap("right", constant_family(1.0), y1=0.05, xi=(0.0, 1.0))
        points, skipped = find_singular_locus(model, [np.array([0.0, 0.04, 0.03])])
        assert skipped == 0
        return points[0]

    def test_located_point_is_singular(self, right_point):
        """Test |det J| <= 1e-10 at the located point with |xi| = 1."""
        assert abs(right_point.det) <= 1e-10
        assert np.linalg.norm(right_point.model.xi) == pytest.approx(1.0)
        assert right_point.tau == pytest.approx(0.05)

    def test_chaotic_profile_folds(self, right_point):
        """Test that constant nonzero rho gives a fold with rank-two Jacobian."""
        result = fold_hessian(right_point.model, right_point.variables)
        assert result.classification == FOLD
        assert result.is_fold
        assert rank_margin(right_point.model, right_point.variables) >= 1e-4

    def test_flat_profile_is_not_a_fold(self):
        """Test that rho = 0 gives a vanishing Hessian."""
        model = ModelMap("right", constant_family(0.0), y1=0.05, xi=(0.0, 1.0))
        points, _ = find_singular_locus(model, [np.array([0.0, 0.04, 0.03])])
        result = fold_hessian(points[0].model, points[0].variables)
        assert result.classification == NOT_A_FOLD

    def test_numerical_map_needs_step(self, right_point):
        """Test that a wrapped numerical map requires an explicit Hessian step."""
        wrapped = CallableMap(right_point.model)
        with pytest.raises(PreconditionError):
            fold_hessian(wrapped, right_point.variables)


class TestLeadingTerms:
    """Tests for the randomized leading-term verification."""

    def test_tau_range_enforced(self):
        """Test that tau outside [0.01, 0.1] is refused."""
        with pytest.raises(PreconditionError):
            verify_fold_leading_terms(constant_family(1.0), [0.2], trials=1)

    def test_flat_family_note(self):
        """Test that a flat profile is flagged and never folds."""
        report = verify_fold_leading_terms(constant_family(0.0), [0.05], trials=4)
        assert report.flat is True
        assert "no fold guaranteed" in report.note
        summary = report.summary["0.05"]
        assert summary["right_not_a_fold"] == summary["right_located"]

    def test_sine_profile_ratios_near_one(self):
        """Test median Hessian ratios within [0.8, 1.2] where |rho| stays above 1/2."""
        report = verify_fold_leading_terms(shifted_sine_family(0.8), [0.05], trials=12, seed=3)
        summary = report.summary["0.05"]
        assert report.flat is False
        assert 0.8 <= summary["right_median_ratio"] <= 1.2
        assert 0.8 <= summary["left_median_ratio"] <= 1.2

    def test_threads_do_not_change_records(self):
        """Test that trial seeding is independent of the worker count."""
        serial = verify_fold_leading_terms(constant_family(1.0), [0.05], trials=3, seed=9)
        pooled = verify_fold_leading_terms(constant_family(1.0), [0.05], trials=3, seed=9, threads=2)
        assert [r["x1"] for r in serial.records] == [r["x1"] for r in pooled.records]
        assert math.isclose(serial.records[0]["a"], pooled.records[0]["a"])
