"""
Fermi Chart

Fermi normal coordinates about a base geodesic gamma0:

    (x1, x2, x3)  ->  exp_{gamma0(x1)}( x2 E2(x1) + x3 E3(x1) )

where (E2, E3) is a parallel orthonormal frame normal to gamma0. In these
coordinates the transverse rays t -> (x1, t x2, t x3) are geodesics and
g_jk = delta_jk with vanishing first transverse derivatives on the axis.

The chart is immutable once built and safe to share between threads.
"""

import logging
from typing import Dict, Optional, Sequence

import numpy as np
from scipy import optimize
from scipy.spatial import cKDTree

from ..errors import ChartError, DomainExitError, PreconditionError
from .geodesic import (
    DEFAULT_STEP,
    GeodesicPath,
    TransportFrame,
    exp_map,
    integrate_geodesic,
    integrate_interval,
    parallel_transport,
)
from .metric import Box, MetricField

logger = logging.getLogger(__name__)

# Extra base-geodesic length on each side so stencils around x1 = 0 and x1 = alpha stay on the path
CHART_PADDING = 0.15

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50

_JACOBIAN_STEP = 1e-3
_PULLBACK_FD_STEP = 1e-2

# Fourth-order first-derivative stencil used for the chart Jacobian
_D1_OFFSETS = np.array([-2.0, -1.0, 1.0, 2.0])
_D1_WEIGHTS = np.array([1 / 12, -8 / 12, 8 / 12, -1 / 12])


def _initial_frame(m: MetricField, x0: np.ndarray, tangent: np.ndarray) -> np.ndarray:
    """
    g-orthonormal (E2, E3) normal to `tangent` at x0.

    Gram-Schmidt of the two coordinate axes least aligned with the tangent,
    oriented so that (tangent, E2, E3) is positively oriented.
    """
    g = m.g(x0)
    speed = float(np.sqrt(tangent @ g @ tangent))
    if not np.isfinite(speed) or speed < 1e-12:
        raise ChartError("base geodesic has degenerate tangent")
    t = tangent / speed
    alignment = [abs(float(e @ g @ t)) / np.sqrt(g[i, i]) for i, e in enumerate(np.eye(3))]
    axes = np.argsort(alignment, kind="stable")[:2]

    frame = []
    for axis in sorted(axes):
        e = np.eye(3)[axis]
        for b in [t] + frame:
            e = e - (e @ g @ b) * b
        norm = float(np.sqrt(e @ g @ e))
        if norm < 1e-10:
            raise ChartError("frame degenerate during Gram-Schmidt")
        frame.append(e / norm)
    if np.linalg.det(np.stack([t, frame[0], frame[1]])) < 0:
        frame[1] = -frame[1]
    return np.stack(frame)


class FermiChart:
    """
    Fermi coordinates about a base geodesic.

    Responsibilities:
    - Forward map (x1, x2, x3) -> ambient point (vectorized exponential map)
    - Inverse map by damped Newton seeded with a polyline projection
    - Pulled-back metric in Fermi coordinates (finite-difference mode)
    """

    def __init__(
        self,
        metric: MetricField,
        base: GeodesicPath,
        frame: TransportFrame,
        alpha: float,
        radius: float,
        rotation: float = 0.0,
    ):
        self.metric = metric
        self.base = base
        self.frame = frame
        self.alpha = alpha
        self.radius = radius
        self.rotation = rotation
        self._tree = cKDTree(base.xs)

    def __repr__(self) -> str:
        return (
            f"FermiChart(metric='{self.metric.name}', alpha={self.alpha:.4g}, "
            f"radius={self.radius:.4g}, rotation={self.rotation:.4g})"
        )

    @property
    def domain(self) -> Box:
        """Coordinate box x1 in [0, alpha], |x2|, |x3| <= radius."""
        return Box([0.0, -self.radius, -self.radius], [self.alpha, self.radius, self.radius])

    # ========== Frames ==========

    def frames(self, x1) -> np.ndarray:
        """(E1, E2, E3) at gamma0(x1), shape x1.shape + (3, 3)."""
        x1 = np.asarray(x1, dtype=float)
        _, tangent = self.base.evaluate(x1)
        normal = self.frame.at(x1)
        c, s = np.cos(self.rotation), np.sin(self.rotation)
        e2 = c * normal[..., 0, :] + s * normal[..., 1, :]
        e3 = -s * normal[..., 0, :] + c * normal[..., 1, :]
        return np.stack([tangent, e2, e3], axis=-2)

    def rotated(self, phi: float) -> "FermiChart":
        """The chart whose normal frame is (E2, E3) rotated by phi."""
        return FermiChart(
            self.metric, self.base, self.frame, self.alpha, self.radius, self.rotation + phi
        )

    # ========== Forward / inverse ==========

    def to_ambient(self, coords: np.ndarray) -> np.ndarray:
        """Ambient points for Fermi coordinates of shape (..., 3)."""
        coords = np.asarray(coords, dtype=float)
        x1 = coords[..., 0]
        if np.any(x1 < self.base.t_min) or np.any(x1 > self.base.t_max):
            raise ChartError(
                f"x1 outside the chart's base interval [{self.base.t_min:.4g}, {self.base.t_max:.4g}]"
            )
        point, _ = self.base.evaluate(x1)
        e = self.frames(x1)
        w = coords[..., 1:2] * e[..., 1, :] + coords[..., 2:3] * e[..., 2, :]
        return exp_map(self.metric, point, w)

    def jacobian(self, coords: np.ndarray, step: float = _JACOBIAN_STEP) -> np.ndarray:
        """d(ambient)/d(coords), shape (..., 3, 3) with the ambient index first."""
        coords = np.asarray(coords, dtype=float)
        offsets = (np.eye(3)[:, None, :] * (_D1_OFFSETS[None, :, None] * step)).reshape(12, 3)
        values = self.to_ambient(coords[..., None, :] + offsets)
        values = values.reshape(coords.shape[:-1] + (3, 4, 3))
        # (..., coord, stencil, ambient) -> (..., ambient, coord)
        return np.swapaxes(np.einsum("...csa,s->...ca", values, _D1_WEIGHTS) / step, -1, -2)

    def _seed(self, points: np.ndarray) -> np.ndarray:
        """Projection onto the base polyline, transverse part read off the frame."""
        flat = points.reshape(-1, 3)
        _, nearest = self._tree.query(flat)
        x1 = np.clip(self.base.ts[nearest], self.base.t_min, self.base.t_max)
        base_points, _ = self.base.evaluate(x1)
        e = self.frames(x1)
        g = self.metric.g(base_points)
        diff = flat - base_points
        x2 = np.einsum("ni,nij,nj->n", e[:, 1], g, diff)
        x3 = np.einsum("ni,nij,nj->n", e[:, 2], g, diff)
        return np.stack([x1, x2, x3], axis=-1).reshape(points.shape)

    def from_ambient(self, points: np.ndarray) -> np.ndarray:
        """
        Fermi coordinates of ambient points by damped Newton iteration, with
        scipy.optimize.root as a per-point fallback.

        Raises:
            ChartError: neither Newton nor the fallback reaches residual 1e-10
        """
        points = np.asarray(points, dtype=float)
        shape = points.shape
        target = points.reshape(-1, 3)
        coords = self._seed(target)
        residual = self.to_ambient(coords) - target
        error = np.linalg.norm(residual, axis=-1)

        for iteration in range(NEWTON_MAX_ITER):
            active = error > NEWTON_TOL
            if not np.any(active):
                break
            J = self.jacobian(coords[active])
            delta = np.linalg.solve(J, -residual[active][..., None])[..., 0]
            damping = np.ones(delta.shape[0])
            current = coords[active]
            best_err = error[active]
            accepted = np.zeros(delta.shape[0], dtype=bool)
            new_coords = current.copy()
            new_res = residual[active].copy()
            new_err = best_err.copy()
            for _ in range(12):
                trial = current + damping[:, None] * delta
                trial_res = self.to_ambient(trial) - target[active]
                trial_err = np.linalg.norm(trial_res, axis=-1)
                improve = (~accepted) & (trial_err < best_err)
                new_coords[improve], new_res[improve], new_err[improve] = (
                    trial[improve],
                    trial_res[improve],
                    trial_err[improve],
                )
                accepted |= improve
                if np.all(accepted):
                    break
                damping = np.where(accepted, damping, 0.5 * damping)
            coords[active], residual[active], error[active] = new_coords, new_res, new_err
            logger.debug(
                f"Inverse chart iteration {iteration}: {int(active.sum())} active, "
                f"max residual {float(error.max()):.3e}"
            )
            if not np.any(accepted):
                break

        failed = np.flatnonzero(error > 1e-10)
        if failed.size:
            logger.debug(f"Newton left {failed.size} points unconverged; retrying with optimize.root")
        for i in failed:
            coords[i], error[i] = self._root_fallback(target[i], coords[i])
        if np.any(error > 1e-10):
            worst = int(np.argmax(error))
            raise ChartError(
                f"inverse chart did not converge at {target[worst]} (residual {error[worst]:.3e})"
            )
        return coords.reshape(shape)

    def _root_fallback(self, target: np.ndarray, start: np.ndarray):
        """Single-point inverse with scipy's hybrid solver from the Newton iterate."""
        try:
            solution = optimize.root(
                lambda x: self.to_ambient(x[None])[0] - target,
                start,
                jac=lambda x: self.jacobian(x[None])[0],
                method="hybr",
                tol=1e-13,
            )
            residual = float(np.linalg.norm(self.to_ambient(solution.x[None])[0] - target))
        except (ChartError, DomainExitError) as exc:
            logger.debug(f"optimize.root left the chart at {target}: {exc}")
            return start, np.inf
        if not solution.success:
            logger.debug(f"optimize.root failed at {target}: {solution.message}")
        return solution.x, residual

    # ========== Pulled-back metric ==========

    def pullback_tensor(self, coords: np.ndarray) -> np.ndarray:
        """g in Fermi coordinates: J^T g(phi(x)) J."""
        coords = np.asarray(coords, dtype=float)
        J = self.jacobian(coords)
        g = self.metric.g(self.to_ambient(coords))
        return np.einsum("...ai,...ab,...bj->...ij", J, g, J)

    def pullback_metric(self, fd_step: float = _PULLBACK_FD_STEP) -> MetricField:
        """The metric expressed in this chart's Fermi coordinates."""
        return MetricField(
            f"fermi:{self.metric.name}",
            self.pullback_tensor,
            self.domain,
            fd_step=fd_step,
            params={"alpha": self.alpha, "radius": self.radius, "rotation": self.rotation},
        )


def build_fermi_chart(
    m: MetricField,
    gamma0: GeodesicPath,
    radius: Optional[float] = None,
    h: float = DEFAULT_STEP,
    initial_frame: Optional[np.ndarray] = None,
) -> FermiChart:
    """
    Construct the Fermi chart about gamma0 on x1 in [0, alpha].

    Args:
        m: Metric
        gamma0: Base geodesic starting at t = 0 (its length is alpha)
        radius: Transverse radius (default 0.3 alpha)
        h: RK4 step for the padded base geodesic and transport
        initial_frame: Optional (E2, E3) at gamma0(0); Gram-Schmidt otherwise

    Raises:
        ChartError: degenerate frame or frame drift above 1e-8
        DomainExitError: padded base geodesic leaves the domain
    """
    alpha = gamma0.t_max
    if alpha <= 0.0 or gamma0.t_min > 0.0:
        raise PreconditionError("base geodesic must start at t = 0 with positive length")
    radius = radius if radius is not None else 0.3 * alpha
    x0, v0 = gamma0.evaluate(0.0)
    try:
        base = integrate_interval(m, x0, v0, -CHART_PADDING, alpha + CHART_PADDING, h)
    except DomainExitError as e:
        logger.error(f"Padded base geodesic left the domain: {e}")
        raise

    if initial_frame is None:
        normal = _initial_frame(m, x0, v0)
    else:
        normal = np.asarray(initial_frame, dtype=float).reshape(2, 3)
    frame = parallel_transport(m, base, normal, t0=0.0)

    # frame must stay orthonormal and normal to the tangent along the base
    vectors = np.concatenate([base.vs[:, None, :], frame.vectors], axis=1)
    g = m.g(base.xs)
    gram = np.einsum("nai,nij,nbj->nab", vectors, g, vectors)
    drift = float(np.max(np.abs(gram - np.eye(3))))
    if drift > 1e-8:
        raise ChartError(f"transported frame drifted from orthonormal by {drift:.3e}")

    chart = FermiChart(m, base, frame, alpha, radius)
    logger.debug(f"Built {chart} (frame drift {drift:.2e})")
    return chart


def axis_chart(
    m: MetricField, alpha: float = 1.0, start: Sequence[float] = (0.0, 0.0, 0.0), radius=None
) -> FermiChart:
    """Chart about the unit-speed geodesic leaving `start` along the first coordinate axis."""
    start = np.asarray(start, dtype=float)
    gamma0 = integrate_geodesic(m, start, [1.0, 0.0, 0.0], alpha)
    return build_fermi_chart(m, gamma0, radius)


# ========== Verification ==========


def verify_fermi_conditions(
    chart: FermiChart,
    samples: Optional[np.ndarray] = None,
    tol: float = 1e-5,
    n_samples: int = 24,
    seed: int = 0,
) -> Dict[str, object]:
    """
    Residuals of the defining conditions of Fermi coordinates.

    Off the axis: sum_{k=2,3} g_jk x_k = x_j (j = 2, 3) and = 0 (j = 1).
    On the axis: g_jk = delta_jk and d2 g_jk = d3 g_jk = 0.

    Returns:
        Report with both maxima, tolerance and pass/fail
    """
    G = chart.pullback_metric()
    if samples is None:
        rng = np.random.default_rng(seed)
        samples = np.column_stack(
            [
                rng.uniform(0.0, chart.alpha, n_samples),
                rng.uniform(-0.5, 0.5, (n_samples, 2)) * chart.radius,
            ]
        )
    samples = np.atleast_2d(np.asarray(samples, dtype=float))

    g = G.g(samples)
    transverse = samples.copy()
    transverse[:, 0] = 0.0
    radial = np.einsum("nij,nj->ni", g[:, :, 1:], samples[:, 1:])
    off_axis = float(np.max(np.abs(radial - transverse)))

    axis = samples.copy()
    axis[:, 1:] = 0.0
    g_axis = G.g(axis)
    dg_axis = G.partials(axis, 1)
    on_axis = float(
        max(np.max(np.abs(g_axis - np.eye(3))), np.max(np.abs(dg_axis[:, 1:, :, :])))
    )
    report = {
        "metric": chart.metric.name,
        "samples": int(samples.shape[0]),
        "radial_residual": off_axis,
        "axis_residual": on_axis,
        "tolerance": tol,
        "passed": bool(off_axis <= tol and on_axis <= tol),
    }
    if not report["passed"]:
        logger.warning(
            f"Fermi conditions fail for {chart.metric.name}: radial {off_axis:.3e}, axis {on_axis:.3e}"
        )
    return report


def radial_ray_defect(
    chart: FermiChart, x1: float, a: Sequence[float], length: float, n: int = 16
) -> float:
    """
    Distance between the chart's radial ray t -> (x1, t a) and the geodesic
    integrated independently from gamma0(x1) in direction a2 E2 + a3 E3.
    """
    a = np.asarray(a, dtype=float)
    a = a / np.linalg.norm(a)
    ts = np.linspace(0.0, length, n)
    coords = np.column_stack([np.full(n, x1), ts * a[0], ts * a[1]])
    ray = chart.to_ambient(coords)

    point, _ = chart.base.evaluate(x1)
    e = chart.frames(x1)
    path = integrate_geodesic(chart.metric, point, a[0] * e[1] + a[1] * e[2], length)
    reference, _ = path.evaluate(ts)
    return float(np.max(np.linalg.norm(ray - reference, axis=-1)))
