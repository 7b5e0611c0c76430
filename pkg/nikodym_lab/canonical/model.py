"""
Model Canonical Relation

Closed-form model of a nearly-axial geodesic family in Fermi coordinates:

    p(x1; tau) = -rho(x1) tau^3 / 12 - rho'(x1) tau^4 / 24,   q = p / tau,
    tau = y1 - x1

and the two reduced projection maps built from it (remainder terms dropped):

- right map, variables z = (z1, z2, z3), fixed (y1, xi):
    (z2 - z3 q,  z3 + z2 q,  tau^-1 [z'.xi + dp/dy1 (-z3, z2).xi])
- left map, variables (eta1, eta2, y1), fixed x = (x1, x2, x3):
    (eta1 + q eta2,  eta2 - q eta1,  (x1 - y1)^-1 [eta.x' - dp/dx1 (-eta2, eta1).x'])

Every quantity is a TauSeries: a polynomial in tau whose coefficients are
x1-derivatives of rho, so the partial derivatives in x1 and y1 are exact.
"""

import logging
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from ..errors import PreconditionError
from ..geometry.metric import MetricField, fd_partial

logger = logging.getLogger(__name__)

JetFn = Callable[[np.ndarray, int], np.ndarray]

# ========== Series ==========


class TauSeries:
    """
    sum_{j,k} coeffs[j, k] * rho^(j)(x1) * tau^k with tau = y1 - x1.

    Attributes:
        coeffs: Array (rows, cols); row j multiplies the j-th x1-derivative of rho
    """

    def __init__(self, coeffs: np.ndarray):
        self.coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))

    def __repr__(self) -> str:
        return f"TauSeries(order={self.order}, degree={self.coeffs.shape[1] - 1})"

    def __add__(self, other: "TauSeries") -> "TauSeries":
        rows = max(self.coeffs.shape[0], other.coeffs.shape[0])
        cols = max(self.coeffs.shape[1], other.coeffs.shape[1])
        out = np.zeros((rows, cols))
        out[: self.coeffs.shape[0], : self.coeffs.shape[1]] += self.coeffs
        out[: other.coeffs.shape[0], : other.coeffs.shape[1]] += other.coeffs
        return TauSeries(out)

    def __sub__(self, other: "TauSeries") -> "TauSeries":
        return self + other.scaled(-1.0)

    def scaled(self, factor: float) -> "TauSeries":
        return TauSeries(self.coeffs * factor)

    @property
    def order(self) -> int:
        """Highest derivative of rho carrying a nonzero coefficient."""
        nonzero = np.nonzero(np.any(self.coeffs != 0, axis=1))[0]
        return int(nonzero[-1]) if nonzero.size else 0

    def _dtau(self) -> np.ndarray:
        rows, cols = self.coeffs.shape
        out = np.zeros((rows, cols))
        out[:, : cols - 1] = self.coeffs[:, 1:] * np.arange(1, cols)
        return out

    def d_y1(self) -> "TauSeries":
        return TauSeries(self._dtau())

    def d_x1(self) -> "TauSeries":
        """rho^(j) tau^k -> rho^(j+1) tau^k - k rho^(j) tau^(k-1)."""
        rows, cols = self.coeffs.shape
        out = np.zeros((rows + 1, cols))
        out[1:] += self.coeffs
        out[:rows] -= self._dtau()
        return TauSeries(out)

    def evaluate(self, family: "ModelFamily", x1, y1) -> np.ndarray:
        x1, y1 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(y1, dtype=float))
        order = self.order
        if order > family.max_order:
            raise PreconditionError(
                f"series needs rho derivatives to order {order}, family '{family.name}' "
                f"provides {family.max_order}"
            )
        jets = family.jets(x1, order)
        powers = (y1 - x1)[..., None] ** np.arange(self.coeffs.shape[1])
        return np.einsum("jk,j...,...k->...", self.coeffs[: order + 1], jets, powers)


def p_series() -> TauSeries:
    return TauSeries([[0.0, 0.0, 0.0, -1 / 12, 0.0], [0.0, 0.0, 0.0, 0.0, -1 / 24]])


def q_series() -> TauSeries:
    return TauSeries([[0.0, 0.0, -1 / 12, 0.0], [0.0, 0.0, 0.0, -1 / 24]])


# ========== Families ==========


class ModelFamily:
    """
    rho as a function of x1 with derivatives up to max_order.

    Attributes:
        name: Label used in reports
        max_order: Highest available derivative of rho
    """

    def __init__(self, name: str, jet_fn: JetFn, max_order: int):
        self.name = name
        self.max_order = max_order
        self._jet_fn = jet_fn
        self.p = p_series()
        self.q = q_series()

    def __repr__(self) -> str:
        return f"ModelFamily('{self.name}')"

    def jets(self, x1, order: int) -> np.ndarray:
        """rho^(j)(x1) for j = 0..order, shape (order + 1, *x1.shape)."""
        if order > self.max_order:
            raise PreconditionError(f"family '{self.name}' has derivatives up to order {self.max_order}")
        return np.asarray(self._jet_fn(np.asarray(x1, dtype=float), order))

    def rho(self, x1) -> np.ndarray:
        return self.jets(x1, 0)[0]

    def rho_prime(self, x1) -> np.ndarray:
        return self.jets(x1, 1)[1]

    def is_flat(self, samples: np.ndarray, tol: float = 1e-12) -> bool:
        j = self.jets(samples, 1)
        return bool(np.all(np.abs(j[0]) + np.abs(j[1]) <= tol))


def _polynomial_jets(coefficients: Sequence[float]) -> JetFn:
    poly = np.polynomial.Polynomial(coefficients)

    def jets(x1: np.ndarray, order: int) -> np.ndarray:
        return np.stack([poly.deriv(j)(x1) if j else poly(x1) for j in range(order + 1)])

    return jets


def constant_family(value: float) -> ModelFamily:
    return ModelFamily(f"constant({value:g})", _polynomial_jets([value]), max_order=8)


def affine_family(value: float, slope: float) -> ModelFamily:
    return ModelFamily(f"affine({value:g}, {slope:g})", _polynomial_jets([value, slope]), max_order=8)


def quadratic_family(value: float, slope: float, curvature: float) -> ModelFamily:
    """rho = value + slope x + curvature x^2."""
    name = f"quadratic({value:g}, {slope:g}, {curvature:g})"
    return ModelFamily(name, _polynomial_jets([value, slope, curvature]), max_order=8)


def shifted_sine_family(psi: float = 0.0, amplitude: float = 1.0) -> ModelFamily:
    """rho = amplitude sin(2 psi - x1), the profile of sogge_example along its axis."""

    def jets(x1: np.ndarray, order: int) -> np.ndarray:
        return np.stack([amplitude * np.sin(2 * psi - x1 - j * np.pi / 2) for j in range(order + 1)])

    return ModelFamily(f"shifted_sine(psi={psi:g})", jets, max_order=8)


def family_from_metric(m_fermi: MetricField, psi: float, step: float = 1e-2) -> ModelFamily:
    """
    rho(., psi) of a metric in Fermi form about its x1-axis.

    rho and rho' come from the metric partials; rho'' and rho''' are finite
    differences of rho' along the axis.
    """
    # imported here, the classifier pulls in the whole chart machinery
    from ..geometry.classifier import rho, rho_prime

    def rho_prime_at(points: np.ndarray) -> np.ndarray:
        return rho_prime(m_fermi, points[..., 0], psi)

    def jets(x1: np.ndarray, order: int) -> np.ndarray:
        values = [rho(m_fermi, x1, psi), rho_prime(m_fermi, x1, psi)]
        if order >= 2:
            points = np.stack([x1, np.zeros_like(x1), np.zeros_like(x1)], axis=-1)
            for n in range(1, order):
                values.append(fd_partial(rho_prime_at, points, (n, 0, 0), step))
        return np.stack(values[: order + 1])

    return ModelFamily(f"metric:{m_fermi.name}(psi={psi:g})", jets, max_order=3)


# ========== Identities ==========


def fold_identity_lhs(family: ModelFamily, x1, y1) -> Tuple[np.ndarray, np.ndarray]:
    """
    Exact values of

        d2q/dx1^2 - d3p/dx1^2 dy1   and   d2q/dy1^2 - d3p/dx1 dy1^2
    """
    p, q = family.p, family.q
    first = q.d_x1().d_x1() - p.d_x1().d_x1().d_y1()
    second = q.d_y1().d_y1() - p.d_x1().d_y1().d_y1()
    return first.evaluate(family, x1, y1), second.evaluate(family, x1, y1)


def fold_leading_terms(family: ModelFamily, x1, y1) -> Tuple[np.ndarray, np.ndarray]:
    """rho/3 + rho' tau/12 and -2 rho/3 - 3 rho' tau/4."""
    tau = np.asarray(y1, dtype=float) - np.asarray(x1, dtype=float)
    r, rp = family.jets(x1, 1)
    return r / 3 + rp * tau / 12, -2 * r / 3 - 0.75 * rp * tau


def fold_identity_residuals(family: ModelFamily, x1, y1) -> Tuple[np.ndarray, np.ndarray]:
    """
    Residuals of the two fold identities against their leading terms.

    Both vanish identically when rho is affine; otherwise the first carries
    -7/12 rho'' tau^2 and the second rho'' tau^2 / 2 at leading order.
    """
    lhs1, lhs2 = fold_identity_lhs(family, x1, y1)
    lead1, lead2 = fold_leading_terms(family, x1, y1)
    return lhs1 - lead1, lhs2 - lead2


def predicted_singular_xi1(family: ModelFamily, z1, y1) -> np.ndarray:
    """Leading-order xi1 at which the right map is singular when z3 = 0 and xi2 = 1."""
    tau = np.asarray(y1, dtype=float) - np.asarray(z1, dtype=float)
    p, q = family.p, family.q
    qz = q.d_x1().evaluate(family, z1, y1)
    py = p.d_y1().evaluate(family, z1, y1)
    pyz = p.d_y1().d_x1().evaluate(family, z1, y1)
    return tau * (qz - py / tau - pyz)


# ========== Maps ==========


class ModelMap:
    """
    One of the two reduced projection maps R^3 -> R^3 with analytic Jacobian.

    Attributes:
        kind: "right" (variables z, parameters y1 and xi) or
              "left" (variables (eta1, eta2, y1), parameter x)
        family: The rho profile
    """

    KINDS = ("right", "left")

    def __init__(
        self,
        kind: str,
        family: ModelFamily,
        y1: Optional[float] = None,
        xi: Optional[Sequence[float]] = None,
        x: Optional[Sequence[float]] = None,
    ):
        if kind not in self.KINDS:
            raise ValueError(f"unknown map kind '{kind}', expected one of {self.KINDS}")
        if kind == "right" and (y1 is None or xi is None):
            raise ValueError("right map needs y1 and xi")
        if kind == "left" and x is None:
            raise ValueError("left map needs x")
        self.kind = kind
        self.family = family
        self.y1 = None if y1 is None else float(y1)
        self.xi = None if xi is None else np.asarray(xi, dtype=float).reshape(2)
        self.x = None if x is None else np.asarray(x, dtype=float).reshape(3)

        p, q = family.p, family.q
        if kind == "right":
            self._series = (q, q.d_x1(), p.d_y1(), p.d_y1().d_x1())
        else:
            self._series = (q, q.d_y1(), p.d_x1(), p.d_x1().d_y1())

    def __repr__(self) -> str:
        return f"ModelMap('{self.kind}', {self.family.name})"

    def with_parameters(self, **kwargs) -> "ModelMap":
        params = {"y1": self.y1, "xi": self.xi, "x": self.x}
        params.update(kwargs)
        return ModelMap(self.kind, self.family, **params)

    def tau(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.kind == "right":
            return self.y1 - v[..., 0]
        return v[..., 2] - self.x[0]

    def _coefficients(self, v: np.ndarray):
        if self.kind == "right":
            x1, y1 = v[..., 0], np.full(v.shape[:-1], self.y1)
        else:
            x1, y1 = np.full(v.shape[:-1], self.x[0]), v[..., 2]
        return [s.evaluate(self.family, x1, y1) for s in self._series]

    def __call__(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        tau = self.tau(v)
        Q, _, P, _ = self._coefficients(v)
        if self.kind == "right":
            z2, z3 = v[..., 1], v[..., 2]
            xi1, xi2 = self.xi
            third = (z2 * xi1 + z3 * xi2 + P * (-z3 * xi1 + z2 * xi2)) / tau
            return np.stack([z2 - z3 * Q, z3 + z2 * Q, third], axis=-1)
        e1, e2 = v[..., 0], v[..., 1]
        x2, x3 = self.x[1], self.x[2]
        V = e1 * x2 + e2 * x3 - P * (-e2 * x2 + e1 * x3)
        return np.stack([e1 + Q * e2, e2 - Q * e1, -V / tau], axis=-1)

    def jacobian(self, v: np.ndarray) -> np.ndarray:
        """Analytic Jacobian, shape (..., 3, 3)."""
        v = np.asarray(v, dtype=float)
        tau = self.tau(v)
        Q, Qd, P, Pd = self._coefficients(v)
        J = np.zeros(v.shape[:-1] + (3, 3))
        if self.kind == "right":
            z2, z3 = v[..., 1], v[..., 2]
            xi1, xi2 = self.xi
            S = z2 * xi1 + z3 * xi2 + P * (-z3 * xi1 + z2 * xi2)
            W = -z3 * xi1 + z2 * xi2
            J[..., 0, :] = np.stack([-z3 * Qd, np.ones_like(Q), -Q], axis=-1)
            J[..., 1, :] = np.stack([z2 * Qd, Q, np.ones_like(Q)], axis=-1)
            J[..., 2, 0] = S / tau**2 + Pd * W / tau
            J[..., 2, 1] = (xi1 + P * xi2) / tau
            J[..., 2, 2] = (xi2 - P * xi1) / tau
            return J
        e1, e2 = v[..., 0], v[..., 1]
        x2, x3 = self.x[1], self.x[2]
        U = -e2 * x2 + e1 * x3
        V = e1 * x2 + e2 * x3 - P * U
        J[..., 0, :] = np.stack([np.ones_like(Q), Q, Qd * e2], axis=-1)
        J[..., 1, :] = np.stack([-Q, np.ones_like(Q), -Qd * e1], axis=-1)
        J[..., 2, 0] = -(x2 - P * x3) / tau
        J[..., 2, 1] = -(x3 + P * x2) / tau
        J[..., 2, 2] = V / tau**2 + Pd * U / tau
        return J

    def determinant(self, v: np.ndarray) -> np.ndarray:
        return np.linalg.det(self.jacobian(v))


class CallableMap:
    """
    Wraps a numerically built map R^3 -> R^3 (e.g. from a Fermi chart) so the
    fold analysis can run on it; the Jacobian is a 4th-order finite difference.
    """

    kind = "numerical"

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], step: float = 1e-4, label: str = "numerical"):
        self._fn = fn
        self.step = step
        self.label = label

    def __repr__(self) -> str:
        return f"CallableMap('{self.label}')"

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(self._fn(np.asarray(v, dtype=float)))

    def jacobian(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        columns = [fd_partial(self, v, tuple(int(a == k) for a in range(3)), self.step) for k in range(3)]
        return np.stack(columns, axis=-1)

    def determinant(self, v: np.ndarray) -> np.ndarray:
        return np.linalg.det(self.jacobian(v))
