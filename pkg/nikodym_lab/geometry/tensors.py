"""
Curvature Tensors

Christoffel symbols, Riemann/Ricci/scalar curvature and the Einstein tensor
B = Ric - R g / 3 (the trace-free part of Ricci), all vectorized over leading
point dimensions.

Conventions:
- Gamma_lower[i, j, k] = Gamma_ijk = (g_ik,j + g_jk,i - g_ij,k) / 2
- Gamma_upper[i, j, k] = Gamma_ij^k
- R[i, k, l, m] = R_iklm with R_1212 > 0 on the round sphere, Ric_km = g^il R_iklm
"""

import logging
from dataclasses import dataclass
from typing import Dict, Sequence

import numpy as np

from .metric import MetricField, inverse_3x3

logger = logging.getLogger(__name__)


@dataclass
class ChristoffelData:
    """Christoffel symbols at a point (or batch of points)."""

    lower: np.ndarray
    upper: np.ndarray

    def symmetry_residual(self) -> float:
        return float(
            max(
                np.max(np.abs(self.lower - np.swapaxes(self.lower, -3, -2))),
                np.max(np.abs(self.upper - np.swapaxes(self.upper, -3, -2))),
            )
        )


@dataclass
class CurvatureData:
    """Riemann, Ricci, scalar and Einstein tensors at a point (or batch)."""

    riemann: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray
    einstein: np.ndarray
    metric_inverse: np.ndarray

    def symmetry_residual(self) -> float:
        R = self.riemann
        return float(
            max(
                np.max(np.abs(R + np.einsum("...jikl->...ijkl", R))),
                np.max(np.abs(R + np.einsum("...ijlk->...ijkl", R))),
                np.max(np.abs(R - np.einsum("...klij->...ijkl", R))),
            )
        )

    def bianchi_residual(self) -> float:
        R = self.riemann
        cyclic = R + np.einsum("...iklj->...ijkl", R) + np.einsum("...iljk->...ijkl", R)
        return float(np.max(np.abs(cyclic)))

    def einstein_trace(self) -> np.ndarray:
        return np.einsum("...ij,...ij->...", self.metric_inverse, self.einstein)


def christoffel_from_partials(g: np.ndarray, dg: np.ndarray) -> ChristoffelData:
    """Christoffel symbols from g and its first partials dg[..., k, i, j] = d_k g_ij."""
    lower = 0.5 * (
        np.einsum("...jik->...ijk", dg) + dg - np.einsum("...kij->...ijk", dg)
    )
    upper = np.einsum("...ijl,...lk->...ijk", lower, inverse_3x3(g))
    return ChristoffelData(lower=lower, upper=upper)


def christoffel(m: MetricField, x: np.ndarray) -> ChristoffelData:
    """
    Christoffel symbols of both index positions at x.

    Raises:
        MetricError: g(x) singular or not positive definite
    """
    x = np.asarray(x, dtype=float)
    return christoffel_from_partials(m.g(x), m.partials(x, 1))


def curvature(m: MetricField, x: np.ndarray) -> CurvatureData:
    """Full curvature data at x from partials of g up to order 2."""
    x = np.asarray(x, dtype=float)
    g = m.g(x)
    gamma = christoffel_from_partials(g, m.partials(x, 1))
    d2g = m.partials(x, 2)
    ginv = inverse_3x3(g)

    second = 0.5 * (
        np.einsum("...klim->...iklm", d2g)
        + np.einsum("...imkl->...iklm", d2g)
        - np.einsum("...kmil->...iklm", d2g)
        - np.einsum("...ilkm->...iklm", d2g)
    )
    quadratic = np.einsum("...kln,...imn->...iklm", gamma.upper, gamma.lower) - np.einsum(
        "...kmn,...iln->...iklm", gamma.upper, gamma.lower
    )
    riemann = second + quadratic
    ricci = np.einsum("...il,...iklm->...km", ginv, riemann)
    scalar = np.einsum("...km,...km->...", ginv, ricci)
    einstein = ricci - scalar[..., None, None] * g / 3.0
    return CurvatureData(
        riemann=riemann, ricci=ricci, scalar=scalar, einstein=einstein, metric_inverse=ginv
    )


def ricci_frame_component(
    m: MetricField, x: np.ndarray, e: np.ndarray, f: np.ndarray
) -> np.ndarray:
    """Ric(e, f) at x for tangent vectors e, f (vectorized)."""
    ricci = curvature(m, x).ricci
    return np.einsum("...i,...ij,...j->...", e, ricci, f)


def is_constant_curvature(
    m: MetricField, samples: Sequence[Sequence[float]], tol: float = 1e-8
) -> Dict[str, object]:
    """
    Constant-curvature test through the Einstein tensor.

    Returns:
        Report with the sup over samples of max |B_ij|, the worst sample and
        the verdict (True iff that sup is below tol).
    """
    points = np.atleast_2d(np.asarray(samples, dtype=float))
    if points.size == 0:
        raise ValueError("is_constant_curvature needs at least one sample point")
    einstein = curvature(m, points).einstein
    per_point = np.max(np.abs(einstein), axis=(-2, -1))
    worst = int(np.argmax(per_point))
    report = {
        "metric": m.name,
        "samples": int(points.shape[0]),
        "max_einstein": float(per_point[worst]),
        "worst_point": points[worst].tolist(),
        "tolerance": tol,
        "verdict": bool(per_point[worst] < tol),
    }
    logger.debug(f"Constant-curvature check for {m.name}: {report['max_einstein']:.3e}")
    return report
