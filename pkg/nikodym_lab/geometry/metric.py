"""
Metric Fields

Riemannian metrics on axis-aligned boxes in R^3 together with their partial
derivatives up to order 3.

Builtin metrics carry analytic derivative jets; metrics parsed from
expressions (and pulled-back Fermi metrics) use 4th-order central finite
differences with Richardson extrapolation for third-order partials.

Array layout used throughout the geometry package: the order-n partials of
g at points of shape (..., 3) have shape (..., 3 x n, 3, 3), with the
differentiation indices first and the tensor indices (j, k) last.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..errors import MetricError
from ..expressions import Expression

logger = logging.getLogger(__name__)

TensorFn = Callable[[np.ndarray], np.ndarray]
JetFn = Callable[[np.ndarray, int], np.ndarray]

BUILTIN_METRICS = ("euclidean", "space_form", "ms_perturbation", "sogge_example")

# Fourth-order central stencils (offsets, weights) for the n-th derivative
_STENCILS: Dict[int, Tuple[Tuple[int, ...], Tuple[float, ...]]] = {
    0: ((0,), (1.0,)),
    1: ((-2, -1, 1, 2), (1 / 12, -8 / 12, 8 / 12, -1 / 12)),
    2: ((-2, -1, 0, 1, 2), (-1 / 12, 16 / 12, -30 / 12, 16 / 12, -1 / 12)),
    3: ((-3, -2, -1, 1, 2, 3), (1 / 8, -1.0, 13 / 8, -13 / 8, 1.0, -1 / 8)),
}

# exp(1/s) is clamped to zero above this cut
_FLAT_CUT = -1e-8


@dataclass(eq=False)
class Box:
    """Axis-aligned box [lower, upper] in R^3."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float).reshape(3)
        self.upper = np.asarray(self.upper, dtype=float).reshape(3)
        if np.any(self.upper <= self.lower):
            raise MetricError(f"empty box {self.lower} .. {self.upper}")

    @classmethod
    def cube(cls, half_width: float, center: Sequence[float] = (0.0, 0.0, 0.0)) -> "Box":
        c = np.asarray(center, dtype=float)
        return cls(c - half_width, c + half_width)

    @property
    def scale(self) -> float:
        return float(np.max(self.upper - self.lower))

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return np.all((points >= self.lower) & (points <= self.upper), axis=-1)

    def corners(self) -> np.ndarray:
        return np.array(list(itertools.product(*zip(self.lower, self.upper))))

    def to_dict(self) -> Dict[str, list]:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}


def _sorted_indices(order: int):
    return itertools.combinations_with_replacement(range(3), order)


def _fill_symmetric(out: np.ndarray, index: Tuple[int, ...], value: np.ndarray) -> None:
    """Assign value to every permutation of a derivative multi-index."""
    for perm in set(itertools.permutations(index)):
        out[(Ellipsis,) + perm] = value


def fd_partial(
    fn: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    counts: Sequence[int],
    h: float,
    richardson: bool = False,
) -> np.ndarray:
    """
    Mixed partial derivative of fn by tensor-product central stencils.

    Args:
        fn: Vectorized function of points (..., 3)
        x: Evaluation points (..., 3)
        counts: Differentiation count per axis, e.g. (0, 1, 1) for d2 d3
        h: Stencil step
        richardson: Combine steps h and h/2 to cancel the h^4 error term

    Returns:
        Derivative with the shape of fn(x)
    """
    if richardson:
        coarse = fd_partial(fn, x, counts, h, richardson=False)
        fine = fd_partial(fn, x, counts, h / 2, richardson=False)
        return (16.0 * fine - coarse) / 15.0

    x = np.asarray(x, dtype=float)
    stencils = [_STENCILS[c] for c in counts]
    combos = list(itertools.product(*[list(zip(*s)) for s in stencils]))
    offsets = np.array([[o for o, _ in combo] for combo in combos], dtype=float) * h
    weights = np.array([np.prod([w for _, w in combo]) for combo in combos])

    # one batched call over all stencil points, stencil axis right after the points
    values = np.asarray(fn(x[..., None, :] + offsets))
    lead = x.ndim - 1
    total = np.tensordot(np.moveaxis(values, lead, -1), weights, axes=([-1], [0]))
    return total / h ** sum(counts)


def fd_derivatives(
    fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, order: int, h: float
) -> np.ndarray:
    """All order-n partials of fn, laid out as (..., 3 x n, *fn_shape)."""
    x = np.asarray(x, dtype=float)
    base = np.asarray(fn(x))
    if order == 0:
        return base
    lead = x.shape[:-1]
    tail = base.shape[len(lead):]
    out = np.zeros(lead + (3,) * order + tail)
    for index in _sorted_indices(order):
        counts = [index.count(a) for a in range(3)]
        value = fd_partial(fn, x, counts, h, richardson=(order == 3))
        for perm in set(itertools.permutations(index)):
            out[(Ellipsis,) + perm + (slice(None),) * len(tail)] = value
    return out


def inverse_3x3(g: np.ndarray) -> np.ndarray:
    """Explicit cofactor inverse of (..., 3, 3) symmetric matrices."""
    a, b, c = g[..., 0, 0], g[..., 0, 1], g[..., 0, 2]
    d, e, f = g[..., 1, 1], g[..., 1, 2], g[..., 2, 2]
    c00 = d * f - e * e
    c01 = c * e - b * f
    c02 = b * e - c * d
    c11 = a * f - c * c
    c12 = b * c - a * e
    c22 = a * d - b * b
    det = a * c00 + b * c01 + c * c02
    if np.any(det <= 0):
        raise MetricError("metric is singular or not positive definite")
    inv = np.stack(
        [
            np.stack([c00, c01, c02], axis=-1),
            np.stack([c01, c11, c12], axis=-1),
            np.stack([c02, c12, c22], axis=-1),
        ],
        axis=-2,
    )
    return inv / det[..., None, None]


class MetricField:
    """
    A symmetric positive-definite 3x3 tensor field on a box.

    Attributes:
        name: Human-readable identifier (builtin name or "custom")
        domain: Box on which the metric is defined
        derivative_mode: "analytic" or "finite-difference"
        fd_step: Step used by finite-difference partials
        params: Construction parameters, echoed in reports
    """

    def __init__(
        self,
        name: str,
        tensor: TensorFn,
        domain: Box,
        jets: Optional[JetFn] = None,
        fd_step: Optional[float] = None,
        params: Optional[Mapping[str, float]] = None,
    ):
        self.name = name
        self._tensor = tensor
        self._jets = jets
        self.domain = domain
        self.fd_step = fd_step if fd_step is not None else 1e-3 * domain.scale
        self.params = dict(params or {})

    def __repr__(self) -> str:
        return f"MetricField(name='{self.name}', mode='{self.derivative_mode}', params={self.params})"

    @property
    def derivative_mode(self) -> str:
        return "analytic" if self._jets is not None else "finite-difference"

    # ========== Pointwise values ==========

    def g(self, x: np.ndarray) -> np.ndarray:
        return self._tensor(np.asarray(x, dtype=float))

    def partials(self, x: np.ndarray, order: int) -> np.ndarray:
        """
        Order-n partial derivatives of g at x.

        Returns an array of shape (..., 3 x order, 3, 3).
        """
        if order < 0 or order > 3:
            raise MetricError(f"partials available to order 3, requested {order}")
        x = np.asarray(x, dtype=float)
        if order == 0:
            return self.g(x)
        if self._jets is not None:
            return self._jets(x, order)
        return fd_derivatives(self._tensor, x, order, self.fd_step)

    def partial(self, x: np.ndarray, multi_index: Sequence[int], j: int, k: int) -> np.ndarray:
        """Single partial d^n g_jk / dx_{i1}...dx_{in}, axes 0-based."""
        multi_index = tuple(multi_index)
        if not multi_index:
            return self.g(x)[..., j, k]
        if self._jets is not None:
            return self.partials(x, len(multi_index))[(Ellipsis,) + multi_index + (j, k)]
        counts = [multi_index.count(a) for a in range(3)]
        fn = lambda p: self._tensor(p)[..., j, k]
        return fd_partial(fn, x, counts, self.fd_step, richardson=(len(multi_index) == 3))

    def inverse(self, x: np.ndarray) -> np.ndarray:
        return inverse_3x3(self.g(x))

    def sqrt_det(self, x: np.ndarray) -> np.ndarray:
        return np.sqrt(np.linalg.det(self.g(x)))

    def inner(self, x: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.einsum("...i,...ij,...j->...", u, self.g(x), v)

    def norm(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.sqrt(self.inner(x, v, v))

    def check_positive_definite(self, points: np.ndarray) -> None:
        """Raise MetricError unless every leading principal minor is positive."""
        g = self.g(points)
        m1 = g[..., 0, 0]
        m2 = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
        m3 = np.linalg.det(g)
        bad = (m1 <= 0) | (m2 <= 0) | (m3 <= 0)
        if np.any(bad):
            where = np.asarray(points)[bad][0]
            raise MetricError(f"{self.name}: metric not positive definite at {where}")


# ========== Builtin metrics ==========


def _constant_jets(x: np.ndarray, order: int) -> np.ndarray:
    return np.zeros(x.shape[:-1] + (3,) * order + (3, 3))


def _identity(x: np.ndarray) -> np.ndarray:
    return np.broadcast_to(np.eye(3), x.shape[:-1] + (3, 3)).copy()


def euclidean(domain: Optional[Box] = None) -> MetricField:
    return MetricField("euclidean", _identity, domain or Box.cube(10.0), jets=_constant_jets)


def space_form(curvature: float, domain: Optional[Box] = None) -> MetricField:
    """
    Constant curvature K in conformally flat form g = (1 + K|x|^2/4)^-2 I.
    """
    K = float(curvature)
    domain = domain or Box.cube(1.0)
    r2_max = float(np.sum(np.maximum(domain.lower ** 2, domain.upper ** 2)))
    if 1.0 + min(K, 0.0) * r2_max / 4.0 <= 0.0:
        raise MetricError(f"space_form(K={K}): conformal factor vanishes inside the domain")

    def factor_jets(x: np.ndarray, order: int) -> np.ndarray:
        u = 1.0 + K * np.sum(x * x, axis=-1) / 4.0
        eye = np.eye(3)
        if order == 0:
            return u ** -2
        if order == 1:
            return -K * x * (u ** -3)[..., None]
        if order == 2:
            return (
                -K * eye * (u ** -3)[..., None, None]
                + 1.5 * K ** 2 * np.einsum("...k,...l->...kl", x, x) * (u ** -4)[..., None, None]
            )
        sym = (
            np.einsum("kl,...m->...klm", eye, x)
            + np.einsum("km,...l->...klm", eye, x)
            + np.einsum("lm,...k->...klm", eye, x)
        )
        cube = np.einsum("...k,...l,...m->...klm", x, x, x)
        return 1.5 * K ** 2 * sym * (u ** -4)[..., None, None, None] - 3.0 * K ** 3 * cube * (
            u ** -5
        )[..., None, None, None]

    def tensor(x: np.ndarray) -> np.ndarray:
        return factor_jets(x, 0)[..., None, None] * np.eye(3)

    def jets(x: np.ndarray, order: int) -> np.ndarray:
        return factor_jets(x, order)[(Ellipsis,) + (None, None)] * np.eye(3)

    return MetricField("space_form", tensor, domain, jets=jets, params={"K": K})


def _bump_a(s: np.ndarray, order: int) -> np.ndarray:
    """n-th derivative of a(s) = exp(1/s) for s < 0, zero beyond the cut."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    live = s < _FLAT_CUT
    w = 1.0 / s[live]
    ew = np.exp(w)
    if order == 0:
        out[live] = ew
    elif order == 1:
        out[live] = -(w ** 2) * ew
    elif order == 2:
        out[live] = (w ** 4 + 2 * w ** 3) * ew
    else:
        out[live] = -(w ** 6 + 6 * w ** 5 + 6 * w ** 4) * ew
    return out


def ms_perturbation(epsilon: float, domain: Optional[Box] = None) -> MetricField:
    """
    dx^2 + eps a(x1) dx2 dx3: Euclidean for x1 >= 0, curved for x1 < 0.
    """
    eps = float(epsilon)
    domain = domain or Box.cube(2.0)
    if abs(eps) >= 2.0:
        raise MetricError(f"ms_perturbation(eps={eps}) is not positive definite")

    def tensor(x: np.ndarray) -> np.ndarray:
        g = _identity(x)
        off = 0.5 * eps * _bump_a(x[..., 0], 0)
        g[..., 1, 2] = off
        g[..., 2, 1] = off
        return g

    def jets(x: np.ndarray, order: int) -> np.ndarray:
        out = _constant_jets(x, order)
        value = 0.5 * eps * _bump_a(x[..., 0], order)
        index = (Ellipsis,) + (0,) * order
        out[index + (1, 2)] = value
        out[index + (2, 1)] = value
        return out

    return MetricField("ms_perturbation", tensor, domain, jets=jets, params={"epsilon": eps})


def _sogge_h(x: np.ndarray, order: int) -> np.ndarray:
    """Order-n partials of h = (x2^2 - x3^2) cos x1 + 2 x2 x3 sin x1."""
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    c, s = np.cos(x1), np.sin(x1)
    A = x2 * x2 - x3 * x3
    B = 2 * x2 * x3
    zero = np.zeros_like(x1)
    if order == 0:
        return A * c + B * s
    if order == 1:
        return np.stack([-A * s + B * c, 2 * x2 * c + 2 * x3 * s, -2 * x3 * c + 2 * x2 * s], axis=-1)
    values = {
        2: {
            (0, 0): -A * c - B * s,
            (0, 1): -2 * x2 * s + 2 * x3 * c,
            (0, 2): 2 * x3 * s + 2 * x2 * c,
            (1, 1): 2 * c,
            (1, 2): 2 * s,
            (2, 2): -2 * c,
        },
        3: {
            (0, 0, 0): A * s - B * c,
            (0, 0, 1): -2 * x2 * c - 2 * x3 * s,
            (0, 0, 2): 2 * x3 * c - 2 * x2 * s,
            (0, 1, 1): -2 * s,
            (0, 1, 2): 2 * c,
            (0, 2, 2): 2 * s,
            (1, 1, 1): zero,
            (1, 1, 2): zero,
            (1, 2, 2): zero,
            (2, 2, 2): zero,
        },
    }[order]
    out = np.zeros(x.shape[:-1] + (3,) * order)
    for index, value in values.items():
        _fill_symmetric(out, index, value)
    return out


def sogge_example(domain: Optional[Box] = None) -> MetricField:
    """
    g11 = 1 + (x2^2 - x3^2) cos x1 + 2 x2 x3 sin x1, g22 = g33 = 1.

    Already in Fermi form about the x1-axis; rho(x1, psi) = sin(2 psi - x1).
    """
    domain = domain or Box.cube(4.0)

    def tensor(x: np.ndarray) -> np.ndarray:
        g = _identity(x)
        g[..., 0, 0] += _sogge_h(x, 0)
        return g

    def jets(x: np.ndarray, order: int) -> np.ndarray:
        out = _constant_jets(x, order)
        out[..., 0, 0] = _sogge_h(x, order)
        return out

    return MetricField("sogge_example", tensor, domain, jets=jets)


def builtin_metric(
    name: str, params: Sequence[float] = (), domain: Optional[Box] = None
) -> MetricField:
    """
    Construct one of the builtin metrics by name.

    Args:
        name: euclidean | space_form | ms_perturbation | sogge_example
        params: [K] for space_form, [epsilon] for ms_perturbation
        domain: Optional box overriding the metric's default domain

    Raises:
        MetricError: unknown name, missing parameter, or degenerate parameter
    """
    params = list(params)
    if name == "euclidean":
        return euclidean(domain)
    if name == "sogge_example":
        return sogge_example(domain)
    if name in ("space_form", "ms_perturbation"):
        if len(params) != 1:
            raise MetricError(f"{name} takes exactly one parameter, got {params}")
        builder = space_form if name == "space_form" else ms_perturbation
        return builder(params[0], domain)
    raise MetricError(f"unknown builtin metric '{name}' (expected one of {BUILTIN_METRICS})")


_COMPONENTS = [(j, k) for j in range(3) for k in range(j, 3)]


def parse_metric(
    table: Mapping[str, str], domain: Optional[Box] = None, fd_step: Optional[float] = None
) -> MetricField:
    """
    Build a metric from expression strings keyed g11 .. g33.

    Missing diagonal entries default to 1, missing off-diagonals to 0; g_kj
    is taken from g_jk when only one of the pair is given.
    """
    domain = domain or Box.cube(1.0)
    exprs: Dict[Tuple[int, int], Expression] = {}
    for key, source in table.items():
        if len(key) != 3 or key[0] != "g" or not key[1:].isdigit():
            raise MetricError(f"unknown metric entry '{key}'")
        j, k = int(key[1]) - 1, int(key[2]) - 1
        if not (0 <= j < 3 and 0 <= k < 3):
            raise MetricError(f"metric index out of range in '{key}'")
        pair = (min(j, k), max(j, k))
        if pair in exprs and exprs[pair].source != str(source).strip():
            raise MetricError(f"conflicting entries for g{pair[0] + 1}{pair[1] + 1}")
        exprs[pair] = Expression(str(source))

    def tensor(x: np.ndarray) -> np.ndarray:
        g = _identity(x)
        for (j, k), expr in exprs.items():
            value = expr(x)
            g[..., j, k] = value
            g[..., k, j] = value
        return g

    logger.info(f"Parsed custom metric with {len(exprs)} explicit components")
    return MetricField(
        "custom",
        tensor,
        domain,
        fd_step=fd_step,
        params={f"g{j + 1}{k + 1}": e.source for (j, k), e in exprs.items()},
    )
