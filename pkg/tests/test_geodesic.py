"""
Geodesic Engine Test Suite

Test Coverage:
- Straight lines and great circles against closed forms
- Energy conservation, reversal round trips and fourth-order convergence
- Domain exits and invalid initial data
- Batched integration, shooting, parallel transport, Taylor coefficients
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from nikodym_lab.errors import DomainExitError, PreconditionError
from nikodym_lab.geometry.geodesic import (
    exp_map,
    geodesic_between,
    integrate_batch,
    integrate_geodesic,
    integrate_segment,
    parallel_transport,
    taylor_coefficients,
)

DIRECTION = np.array([1.0, 0.3, 0.2])


class TestClosedForms:
    """Tests against geodesics known in closed form."""

    def test_euclidean_line(self, flat):
        """Test that Euclidean geodesics are unit-speed straight lines."""
        path = integrate_geodesic(flat, [0.1, 0.2, 0.3], DIRECTION, 1.0)
        unit = DIRECTION / np.linalg.norm(DIRECTION)
        assert_allclose(path.xs[-1], np.array([0.1, 0.2, 0.3]) + unit, atol=1e-12)
        assert path.t_max == pytest.approx(1.0)

    def test_sphere_radial_geodesic(self, sphere):
        """Test x1(t) = 2 tan(t/2) for the radial geodesic of the conformal sphere."""
        path = integrate_geodesic(sphere, [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], 0.8)
        assert_allclose(path.xs[:, 0], 2 * np.tan(path.ts / 2), atol=1e-10)
        assert_allclose(path.xs[:, 1:], 0.0, atol=1e-14)

    def test_dense_output_between_nodes(self, sphere):
        """Test that the quintic Hermite interpolant matches the closed form off the nodes."""
        path = integrate_geodesic(sphere, [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], 0.5)
        t = np.array([0.12345, 0.3333, 0.49999])
        x, v = path.evaluate(t)
        assert_allclose(x[:, 0], 2 * np.tan(t / 2), atol=1e-10)
        assert_allclose(v[:, 0], 1 / np.cos(t / 2) ** 2, atol=1e-8)


class TestAccuracy:
    """Tests for the RK4 integrator's accuracy guarantees."""

    def test_energy_drift(self, sogge):
        """Test |g(v, v) - 1| <= 1e-8 over alpha = 1 at h = 1e-3."""
        path = integrate_geodesic(sogge, [0.0, 0.0, 0.0], DIRECTION, 1.0, h=1e-3)
        assert path.energy_residual() <= 1e-8

    def test_reversal_round_trip(self, sogge):
        """Test that integrating back from the endpoint returns to the start within 1e-6."""
        start = np.array([-0.3, 0.1, 0.0])
        path = integrate_geodesic(sogge, start, DIRECTION, 1.0)
        end, v_end = path.evaluate(path.t_max)
        back = integrate_geodesic(sogge, end, -v_end, 1.0)
        assert np.linalg.norm(back.xs[-1] - start) <= 1e-6

    def test_reversed_path(self, sogge):
        """Test that reversed() swaps endpoints and negates velocities."""
        path = integrate_geodesic(sogge, [0.0, 0.0, 0.0], DIRECTION, 0.5)
        back = path.reversed()
        assert_allclose(back.xs[0], path.xs[-1])
        assert_allclose(back.vs[-1], -path.vs[0])
        assert back.t_min == 0.0

    def test_fourth_order_convergence(self, sogge):
        """Test that halving h divides the endpoint error by at least 12."""
        reference = integrate_geodesic(sogge, [0.0, 0.0, 0.0], DIRECTION, 1.0, h=0.00125).xs[-1]
        errors = [
            np.linalg.norm(integrate_geodesic(sogge, [0.0, 0.0, 0.0], DIRECTION, 1.0, h=h).xs[-1] - reference)
            for h in (0.04, 0.02, 0.01)
        ]
        assert errors[0] / errors[1] >= 12
        assert errors[1] / errors[2] >= 12


class TestErrors:
    """Tests for invalid initial data and domain exits."""

    def test_domain_exit_time(self, sphere):
        """Test that leaving the unit cube reports the exit time 2 atan(1/2)."""
        with pytest.raises(DomainExitError) as info:
            integrate_geodesic(sphere, [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], 2.0)
        assert info.value.exit_time == pytest.approx(2 * math.atan(0.5), abs=2e-3)

    def test_start_outside_domain(self, sphere):
        """Test that a start point outside the domain raises immediately."""
        with pytest.raises(DomainExitError):
            integrate_geodesic(sphere, [2.0, 0.0, 0.0], [1.0, 0.0, 0.0], 0.1)

    def test_zero_velocity(self, sogge):
        """Test that a zero initial velocity is a precondition error."""
        with pytest.raises(PreconditionError):
            integrate_geodesic(sogge, [0.0, 0.0, 0.0], [0.0, 0.0, 0.0], 1.0)

    def test_evaluate_out_of_range(self, sogge):
        """Test that dense output refuses parameters outside the path."""
        path = integrate_geodesic(sogge, [0.0, 0.0, 0.0], DIRECTION, 0.2)
        with pytest.raises(PreconditionError):
            path.evaluate(0.5)


class TestBatchAndSegments:
    """Tests for batched and two-sided integration."""

    def test_batch_matches_single(self, sogge, rng):
        """Test that integrate_batch reproduces integrate_geodesic node by node."""
        starts = rng.uniform(-0.2, 0.2, (4, 3))
        directions = rng.normal(size=(4, 3))
        ts, xs, vs, valid = integrate_batch(sogge, starts, directions, 0.0, 0.5, 1e-3)
        assert valid.all()
        for k in range(4):
            single = integrate_geodesic(sogge, starts[k], directions[k], 0.5, 1e-3)
            assert_allclose(xs[:, k], single.xs, atol=1e-12)

    def test_batch_flags_domain_exit(self, sphere):
        """Test that geodesics leaving the domain are flagged, not raised."""
        starts = np.zeros((2, 3))
        directions = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        _, _, _, valid = integrate_batch(sphere, starts, directions, 0.0, 1.5, 1e-2)
        assert not valid.any()
        _, _, _, valid = integrate_batch(sphere, starts, directions, -0.5, 0.5, 1e-2)
        assert valid.all()

    def test_segment_centered(self, sogge):
        """Test that integrate_segment passes through its center at t = 0."""
        center = np.array([0.4, 0.1, -0.1])
        path = integrate_segment(sogge, center, DIRECTION, 0.3)
        assert path.t_min == pytest.approx(-0.3)
        assert path.t_max == pytest.approx(0.3)
        assert_allclose(path.point_at_zero(), center, atol=1e-14)


class TestShooting:
    """Tests for the exponential map and shooting."""

    def test_exp_map_at_zero(self, sogge):
        """Test exp_x(0) = x."""
        x = np.array([0.2, -0.1, 0.3])
        assert_allclose(exp_map(sogge, x, np.zeros(3)), x)

    def test_geodesic_between_hits_target(self, sogge):
        """Test that the shot geodesic ends at the target within 1e-8."""
        target = np.array([0.8, 0.2, -0.1])
        path = geodesic_between(sogge, [0.0, 0.0, 0.0], target)
        assert np.linalg.norm(path.xs[-1] - target) <= 1e-8


class TestTransportAndTaylor:
    """Tests for parallel transport and derivative extraction."""

    def test_transport_preserves_inner_products(self, sogge):
        """Test that the Gram matrix of a transported frame is constant."""
        path = integrate_geodesic(sogge, [0.0, 0.0, 0.0], DIRECTION, 1.0)
        frame = parallel_transport(sogge, path, np.eye(3))
        gram = frame.gram()
        assert_allclose(gram, np.broadcast_to(gram[0], gram.shape), atol=1e-8)

    def test_transport_along_flat_line(self, flat):
        """Test that Euclidean transport leaves vectors unchanged."""
        path = integrate_geodesic(flat, [0.0, 0.0, 0.0], DIRECTION, 0.5)
        frame = parallel_transport(flat, path, [[0.0, 1.0, 0.0]])
        assert_allclose(frame.at(np.array([0.1, 0.37])), [[[0.0, 1.0, 0.0]], [[0.0, 1.0, 0.0]]], atol=1e-14)

    def test_taylor_coefficients_on_sphere(self, sphere):
        """Test derivatives of 2 tan(t/2) = t + t^3/12 + ... at t = 0."""
        path = integrate_segment(sphere, [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], 0.2)
        first, second, third = taylor_coefficients(path, 3, [1.0, 0.0, 0.0])
        assert first == pytest.approx(1.0, abs=1e-8)
        assert second == pytest.approx(0.0, abs=1e-7)
        assert third == pytest.approx(0.5, rel=1e-5)

    def test_taylor_order_range(self, sphere):
        """Test that only orders 1..4 are available."""
        path = integrate_segment(sphere, [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], 0.2)
        with pytest.raises(PreconditionError):
            taylor_coefficients(path, 5, [1.0, 0.0, 0.0])
