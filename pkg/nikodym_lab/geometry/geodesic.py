"""
Geodesic Engine

Fixed-step RK4 integration of the geodesic equation
    d^2 gamma^k / dt^2 = - Gamma_ij^k (dgamma^i/dt) (dgamma^j/dt)
with quintic Hermite dense output, parallel transport along computed paths,
Taylor-coefficient extraction at t = 0, a vectorized exponential map and a
shooting solver for the two-point problem.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy import optimize

from ..errors import DomainExitError, IntegrationError, PreconditionError
from .metric import MetricField
from .tensors import christoffel

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-3

# Rows: quintic Hermite basis (x0, h v0, h^2 a0, x1, h v1, h^2 a1); columns: powers of s
_HERMITE = np.array(
    [
        [1.0, 0.0, 0.0, -10.0, 15.0, -6.0],
        [0.0, 1.0, 0.0, -6.0, 8.0, -3.0],
        [0.0, 0.0, 0.5, -1.5, 1.5, -0.5],
        [0.0, 0.0, 0.0, 10.0, -15.0, 6.0],
        [0.0, 0.0, 0.0, -4.0, 7.0, -3.0],
        [0.0, 0.0, 0.0, 0.5, -1.0, 0.5],
    ]
)

# Fourth-order central stencils on offsets -3..3 for derivatives 1..4
_TAYLOR_STENCILS = {
    1: np.array([0.0, 1 / 12, -8 / 12, 0.0, 8 / 12, -1 / 12, 0.0]),
    2: np.array([0.0, -1 / 12, 16 / 12, -30 / 12, 16 / 12, -1 / 12, 0.0]),
    3: np.array([1 / 8, -1.0, 13 / 8, 0.0, -13 / 8, 1.0, -1 / 8]),
    4: np.array([-1 / 6, 2.0, -13 / 2, 28 / 3, -13 / 2, 2.0, -1 / 6]),
}
_TAYLOR_OFFSETS = np.arange(-3, 4)


def geodesic_acceleration(m: MetricField, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Right-hand side -Gamma(v, v) of the geodesic equation (vectorized)."""
    gamma = christoffel(m, x).upper
    return -np.einsum("...ijk,...i,...j->...k", gamma, v, v)


def _rk4_step(m: MetricField, x: np.ndarray, v: np.ndarray, h: float):
    a1 = geodesic_acceleration(m, x, v)
    x2, v2 = x + 0.5 * h * v, v + 0.5 * h * a1
    a2 = geodesic_acceleration(m, x2, v2)
    x3, v3 = x + 0.5 * h * v2, v + 0.5 * h * a2
    a3 = geodesic_acceleration(m, x3, v3)
    x4, v4 = x + h * v3, v + h * a3
    a4 = geodesic_acceleration(m, x4, v4)
    x_new = x + h / 6.0 * (v + 2 * v2 + 2 * v3 + v4)
    v_new = v + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
    return x_new, v_new


class GeodesicPath:
    """
    An arclength-parameterized geodesic with dense output.

    States are stored at the RK4 nodes ts; evaluate() interpolates position
    and velocity anywhere in [t_min, t_max] with quintic Hermite polynomials
    built from (gamma, dgamma, d2gamma) at the nodes.
    """

    def __init__(
        self,
        metric: MetricField,
        ts: np.ndarray,
        xs: np.ndarray,
        vs: np.ndarray,
        h: float,
    ):
        self.metric = metric
        self.ts = np.asarray(ts, dtype=float)
        self.xs = np.asarray(xs, dtype=float)
        self.vs = np.asarray(vs, dtype=float)
        self.accs = geodesic_acceleration(metric, self.xs, self.vs)
        self.h = h

    def __repr__(self) -> str:
        return (
            f"GeodesicPath(metric='{self.metric.name}', t=[{self.t_min:.4g}, {self.t_max:.4g}], "
            f"nodes={len(self.ts)})"
        )

    @property
    def t_min(self) -> float:
        return float(self.ts[0])

    @property
    def t_max(self) -> float:
        return float(self.ts[-1])

    @property
    def length(self) -> float:
        return self.t_max - self.t_min

    def point_at_zero(self) -> np.ndarray:
        return self.evaluate(0.0)[0]

    def evaluate(self, t) -> tuple:
        """
        Position and velocity at parameter values t.

        Returns:
            (positions, velocities), each of shape t.shape + (3,)
        """
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t_min - 1e-12) or np.any(t > self.t_max + 1e-12):
            raise PreconditionError(
                f"t outside dense output range [{self.t_min}, {self.t_max}]"
            )
        idx = np.clip(np.searchsorted(self.ts, t, side="right") - 1, 0, len(self.ts) - 2)
        t0, t1 = self.ts[idx], self.ts[idx + 1]
        dt = (t1 - t0)[..., None]
        s = ((t - t0) / (t1 - t0))[..., None]

        powers = s ** np.arange(6)
        dpowers = np.concatenate(
            [np.zeros_like(s), np.arange(1, 6) * s ** np.arange(5)], axis=-1
        )
        basis = powers @ _HERMITE.T
        dbasis = dpowers @ _HERMITE.T

        data = np.stack(
            [
                self.xs[idx],
                dt * self.vs[idx],
                dt ** 2 * self.accs[idx],
                self.xs[idx + 1],
                dt * self.vs[idx + 1],
                dt ** 2 * self.accs[idx + 1],
            ],
            axis=-2,
        )
        position = np.einsum("...b,...bi->...i", basis, data)
        velocity = np.einsum("...b,...bi->...i", dbasis, data) / dt
        return position, velocity

    def polyline(self, spacing: float) -> tuple:
        """Positions and unit tangents sampled at spacing <= `spacing`."""
        n = max(2, int(math.ceil(self.length / spacing)) + 1)
        t = np.linspace(self.t_min, self.t_max, n)
        x, v = self.evaluate(t)
        return x, v

    def energy_residual(self) -> float:
        """max |g(dgamma, dgamma) - 1| over the stored nodes."""
        return float(np.max(np.abs(self.metric.inner(self.xs, self.vs, self.vs) - 1.0)))

    def reversed(self) -> "GeodesicPath":
        """The same curve traversed backwards, reparameterized to start at 0."""
        return GeodesicPath(
            self.metric,
            self.t_max - self.ts[::-1],
            self.xs[::-1],
            -self.vs[::-1],
            self.h,
        )


def _march(
    m: MetricField, x0: np.ndarray, v0: np.ndarray, length: float, h: float, sign: float = 1.0
):
    """RK4 from (x0, v0) over arclength `length`; returns nodes in march order."""
    n_steps = max(1, int(math.ceil(length / h - 1e-12)))
    step = length / n_steps
    xs = np.empty((n_steps + 1, 3))
    vs = np.empty((n_steps + 1, 3))
    xs[0], vs[0] = x0, v0
    x, v = x0, v0
    for i in range(1, n_steps + 1):
        x, v = _rk4_step(m, x, v, step)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise IntegrationError(f"non-finite geodesic state at t={sign * i * step:.6g}")
        if not m.domain.contains(x):
            raise DomainExitError(exit_time=sign * i * step, point=x)
        xs[i], vs[i] = x, v
    ts = sign * step * np.arange(n_steps + 1)
    return ts, xs, vs, step


def _unit_velocity(m: MetricField, x0: np.ndarray, v0: np.ndarray) -> np.ndarray:
    v0 = np.asarray(v0, dtype=float)
    speed = float(m.norm(x0, v0))
    if not np.isfinite(speed) or speed < 1e-14:
        raise PreconditionError("initial velocity must be nonzero")
    return v0 / speed


def integrate_geodesic(
    m: MetricField,
    x0: Sequence[float],
    v0: Sequence[float],
    alpha: float,
    h: float = DEFAULT_STEP,
) -> GeodesicPath:
    """
    Integrate the unit-speed geodesic from x0 in direction v0 for length alpha.

    Raises:
        PreconditionError: v0 = 0
        DomainExitError: the path leaves m.domain (carries the exit time)
        IntegrationError: non-finite state
    """
    x0 = np.asarray(x0, dtype=float)
    if not m.domain.contains(x0):
        raise DomainExitError(exit_time=0.0, point=x0)
    v0 = _unit_velocity(m, x0, v0)
    ts, xs, vs, step = _march(m, x0, v0, alpha, h)
    return GeodesicPath(m, ts, xs, vs, step)


def integrate_interval(
    m: MetricField,
    x0: Sequence[float],
    v0: Sequence[float],
    t_start: float,
    t_end: float,
    h: float = DEFAULT_STEP,
) -> GeodesicPath:
    """Unit-speed geodesic with gamma(0) = x0 on the interval [t_start, t_end] (t_start <= 0 <= t_end)."""
    if not (t_start <= 0.0 <= t_end) or t_end - t_start <= 0.0:
        raise PreconditionError(f"interval [{t_start}, {t_end}] must contain 0")
    x0 = np.asarray(x0, dtype=float)
    if not m.domain.contains(x0):
        raise DomainExitError(exit_time=0.0, point=x0)
    v0 = _unit_velocity(m, x0, v0)
    pieces = []
    step = h
    if t_start < 0.0:
        ts_b, xs_b, vs_b, step = _march(m, x0, -v0, -t_start, h, sign=-1.0)
        pieces.append((ts_b[:0:-1], xs_b[:0:-1], -vs_b[:0:-1]))
    if t_end > 0.0:
        ts_f, xs_f, vs_f, step = _march(m, x0, v0, t_end, h)
        pieces.append((ts_f, xs_f, vs_f))
    else:
        pieces.append((np.zeros(1), x0[None], v0[None]))
    ts, xs, vs = (np.concatenate(parts) for parts in zip(*pieces))
    return GeodesicPath(m, ts, xs, vs, step)


def integrate_segment(
    m: MetricField,
    center: Sequence[float],
    v: Sequence[float],
    half_length: float,
    h: float = DEFAULT_STEP,
) -> GeodesicPath:
    """Geodesic on t in [-L, L] passing through `center` at t = 0."""
    return integrate_interval(m, center, v, -half_length, half_length, h)


def exp_map(m: MetricField, x: np.ndarray, w: np.ndarray, steps: int = 64) -> np.ndarray:
    """
    exp_x(w) by RK4 on the affine parameter [0, 1] (vectorized over batches).

    The fixed step count makes the result a smooth function of (x, w),
    including w = 0, which the Fermi chart relies on.
    """
    x = np.asarray(x, dtype=float)
    v = np.broadcast_to(np.asarray(w, dtype=float), np.broadcast_shapes(x.shape, np.shape(w))).copy()
    x = np.broadcast_to(x, v.shape).copy()
    h = 1.0 / steps
    for _ in range(steps):
        x, v = _rk4_step(m, x, v, h)
    return x


SHOOTING_STEPS = 128


def shoot(
    m: MetricField, x: Sequence[float], y: Sequence[float], steps: int = SHOOTING_STEPS
) -> np.ndarray:
    """
    Initial velocity w with exp_x(w) = y (affine parameter on [0, 1]).

    Solved with scipy.optimize.root seeded by the straight chord.

    Raises:
        IntegrationError: the root finder does not reach y within 1e-9
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)

    def residual(w):
        return exp_map(m, x, w, steps) - y

    solution = optimize.root(residual, y - x, method="hybr", tol=1e-13)
    if not solution.success and np.max(np.abs(residual(solution.x))) > 1e-9:
        raise IntegrationError(f"shooting from {x} to {y} failed: {solution.message}")
    logger.debug(f"Shot {x} -> {y} in {solution.nfev} evaluations")
    return solution.x


def geodesic_between(
    m: MetricField, x: Sequence[float], y: Sequence[float], h: float = DEFAULT_STEP
) -> GeodesicPath:
    """Unit-speed geodesic from x to y, of length |w|_g for the shot velocity w."""
    w = shoot(m, x, y)
    return integrate_geodesic(m, x, w, float(m.norm(np.asarray(x, dtype=float), w)), h)


def integrate_batch(
    m: MetricField,
    x0: np.ndarray,
    v0: np.ndarray,
    t_start: float,
    t_end: float,
    h: float,
):
    """
    Many unit-speed geodesics at once, sampled on a common parameter grid.

    Geodesics that leave the domain are flagged instead of raising.

    Returns:
        (ts (n_t,), positions (n_t, n, 3), velocities (n_t, n, 3), valid (n,))
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    v0 = np.atleast_2d(np.asarray(v0, dtype=float))
    v0 = v0 / m.norm(x0, v0)[:, None]
    valid = m.domain.contains(x0).copy()

    def march(length: float, sign: float):
        n_steps = max(1, int(math.ceil(length / h - 1e-12)))
        step = sign * length / n_steps
        xs, vs = [x0], [v0]
        x, v = x0, v0
        for _ in range(n_steps):
            x, v = _rk4_step(m, x, v, step)
            valid[:] &= m.domain.contains(x) & np.all(np.isfinite(x), axis=-1)
            xs.append(x)
            vs.append(v)
        return step * np.arange(n_steps + 1), np.stack(xs), np.stack(vs)

    ts, xs, vs = np.zeros(1), x0[None], v0[None]
    if t_start < 0.0:
        tb, xb, vb = march(-t_start, -1.0)
        ts, xs, vs = tb[::-1], xb[::-1], vb[::-1]
    if t_end > 0.0:
        tf, xf, vf = march(t_end, 1.0)
        ts = np.concatenate([ts[:-1], tf])
        xs = np.concatenate([xs[:-1], xf])
        vs = np.concatenate([vs[:-1], vf])
    return ts, xs, vs, valid


@dataclass
class TransportFrame:
    """Vectors parallel-transported along a geodesic path."""

    path: GeodesicPath
    vectors: np.ndarray  # (n_nodes, n_vectors, 3)

    def at(self, t) -> np.ndarray:
        """Transported vectors at parameters t by cubic Hermite interpolation."""
        t = np.asarray(t, dtype=float)
        ts = self.path.ts
        idx = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2)
        t0, t1 = ts[idx], ts[idx + 1]
        dt = (t1 - t0)[..., None, None]
        s = ((t - t0) / (t1 - t0))[..., None, None]
        X0, X1 = self.vectors[idx], self.vectors[idx + 1]
        D0 = _transport_rate(self.path.metric, self.path.xs[idx], self.path.vs[idx], X0)
        D1 = _transport_rate(self.path.metric, self.path.xs[idx + 1], self.path.vs[idx + 1], X1)
        h00 = 2 * s ** 3 - 3 * s ** 2 + 1
        h10 = s ** 3 - 2 * s ** 2 + s
        h01 = -2 * s ** 3 + 3 * s ** 2
        h11 = s ** 3 - s ** 2
        return h00 * X0 + h10 * dt * D0 + h01 * X1 + h11 * dt * D1

    def gram(self) -> np.ndarray:
        """g(X_i, X_j) at every node, shape (n_nodes, n_vectors, n_vectors)."""
        g = self.path.metric.g(self.path.xs)
        return np.einsum("nai,nij,nbj->nab", self.vectors, g, self.vectors)


def _transport_rate(m: MetricField, x: np.ndarray, v: np.ndarray, X: np.ndarray) -> np.ndarray:
    """dX^i/dt = -Gamma_jk^i v^j X^k for a stack of vectors X (..., n, 3)."""
    gamma = christoffel(m, x).upper
    return -np.einsum("...jki,...j,...nk->...ni", gamma, v, X)


def parallel_transport(
    m: MetricField, path: GeodesicPath, X0: np.ndarray, t0: float = 0.0
) -> TransportFrame:
    """
    Parallel-transport one or more vectors along path.

    Args:
        X0: Vector(s) at parameter t0, shape (3,) or (n_vectors, 3)
        t0: Node parameter where X0 is given (nearest node is used)
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    ts = path.ts
    i0 = int(np.argmin(np.abs(ts - t0)))
    vectors = np.empty((len(ts),) + X0.shape)
    vectors[i0] = X0

    def rate(t, X):
        x, v = path.evaluate(t)
        return _transport_rate(m, x, v, X)

    for direction in (1, -1):
        stop = len(ts) if direction == 1 else -1
        X = X0
        for i in range(i0, stop - direction, direction):
            j = i + direction
            t, h = ts[i], ts[j] - ts[i]
            k1 = rate(t, X)
            k2 = rate(t + h / 2, X + h / 2 * k1)
            k3 = rate(t + h / 2, X + h / 2 * k2)
            k4 = rate(t + h, X + h * k3)
            X = X + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            vectors[j] = X
    return TransportFrame(path=path, vectors=vectors)


def taylor_coefficients(
    path: GeodesicPath,
    order: int,
    direction: Sequence[float],
    step: float = 0.02,
    transform: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> List[float]:
    """
    d^k <gamma, direction> / dt^k at t = 0 for k = 1..order.

    Central 4th-order differences of the dense output at steps `step` and
    `step`/2, combined by Richardson extrapolation. `transform` maps ambient
    samples to another coordinate system (e.g. a Fermi chart) before the
    projection.
    """
    if order < 1 or order > 4:
        raise PreconditionError(f"Taylor coefficients available to order 4, requested {order}")
    span = 3 * step
    if path.t_min > -span or path.t_max < span:
        raise PreconditionError(
            f"dense output must cover [-{span:.3g}, {span:.3g}] for the central stencil"
        )
    d = np.asarray(direction, dtype=float)

    def projected(s: float) -> np.ndarray:
        x, _ = path.evaluate(_TAYLOR_OFFSETS * s)
        if transform is not None:
            x = transform(x)
        return x @ d

    coarse, fine = projected(step), projected(step / 2)
    coefficients = []
    for k in range(1, order + 1):
        w = _TAYLOR_STENCILS[k]
        d_coarse = float(w @ coarse) / step ** k
        d_fine = float(w @ fine) / (step / 2) ** k
        coefficients.append((16.0 * d_fine - d_coarse) / 15.0)
    return coefficients
