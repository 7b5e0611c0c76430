"""
Degenerate Metric Experiment

dx^2 + eps a(x1) dx2 dx3 with a(s) = exp(1/s) for s < 0 and 0 otherwise:

- (a) the half-plane {x3 = 0, x1 >= 0} is totally geodesic
- (b) Gamma_12^3 does not vanish where x1 < 0 (checked against a
  finite-difference oracle on g23)
- (c) from start points near {(x1, 0, 0): x1 < 0}, a geodesic can be steered
  to reach x1 = 0 with gamma3 = dgamma3 = 0; from there on it lies in the
  plane and sweeps {x3 = 0, x1 > 0, |x2| <= 1}. The measure of start points
  admitting such a geodesic is reported; it collapses to zero at eps = 0.
"""

import logging
import math
import time
from typing import Dict, Optional

import numpy as np
from scipy import optimize

from ..config import ExperimentConfig
from ..errors import DomainExitError, IntegrationError
from ..geometry.geodesic import GeodesicPath, integrate_batch, integrate_geodesic
from ..geometry.metric import MetricField, fd_partial, ms_perturbation
from ..geometry.tensors import christoffel

logger = logging.getLogger(__name__)

ORACLE_STEP = 1e-3
ORACLE_TOL = 1e-8
CAPTURE_TOL = 1e-8


def _epsilon(config: ExperimentConfig) -> float:
    options = config.command_options("nikodym-degenerate")
    if "epsilon" in options:
        return float(options["epsilon"])
    if config.metric_name == "ms_perturbation" and config.metric_params:
        return float(config.metric_params[0])
    return 0.5


# ========== (a) totally geodesic half-plane ==========


def in_plane_defect(
    m: MetricField,
    start=(0.1, 0.0, 0.0),
    n_directions: int = 16,
    length: float = 1.0,
    h: float = 1e-3,
) -> Dict[str, float]:
    """max |gamma3| of in-plane launched geodesics before they first reach x1 < 0."""
    phi = np.linspace(-math.pi, math.pi, n_directions, endpoint=False)
    directions = np.column_stack([np.cos(phi), np.sin(phi), np.zeros_like(phi)])
    starts = np.broadcast_to(np.asarray(start, dtype=float), directions.shape)
    _, xs, _, valid = integrate_batch(m, starts, directions, 0.0, length, h)
    # nodes before the first excursion into x1 < 0
    prefix = np.cumprod(xs[..., 0] >= 0.0, axis=0).astype(bool)
    defect = float(np.max(np.abs(np.where(prefix, xs[..., 2], 0.0))[:, valid], initial=0.0))
    return {"max_gamma3": defect, "directions": int(valid.sum()), "start": list(start)}


# ========== (b) non-geodesy for x1 < 0 ==========


def christoffel_oracle(m: MetricField, points: np.ndarray, step: float = ORACLE_STEP) -> np.ndarray:
    """Gamma_12^3 = (d1 g23 / 2) g^33 for a metric whose only non-flat entry is g23(x1)."""
    d1_g23 = fd_partial(lambda p: m.g(p)[..., 1, 2], points, (1, 0, 0), step)
    lower = 0.5 * d1_g23
    inverse = m.inverse(points)
    return lower * inverse[..., 2, 2]


def christoffel_check(m: MetricField, x1_values=(-1.0, -0.5, -0.25), tol: float = ORACLE_TOL) -> Dict[str, object]:
    points = np.column_stack([np.asarray(x1_values, dtype=float), np.zeros(len(x1_values)), np.zeros(len(x1_values))])
    exact = christoffel(m, points).upper[:, 0, 1, 2]
    oracle = christoffel_oracle(m, points)
    error = float(np.max(np.abs(exact - oracle)))
    flat = christoffel(m, points * np.array([-1.0, 1.0, 1.0])).upper
    return {
        "points": points.tolist(),
        "gamma_12_3": exact.tolist(),
        "oracle": oracle.tolist(),
        "oracle_error": error,
        "oracle_agrees": error <= tol,
        "nonzero": bool(np.all(np.abs(exact) > 0.0)),
        "max_christoffel_flat_side": float(np.max(np.abs(flat))),
    }


# ========== (c) capture into the plane ==========


def _crossing(path: GeodesicPath) -> Optional[float]:
    """First parameter where gamma1 reaches 0, refined with brentq."""
    above = np.flatnonzero(path.xs[:, 0] >= 0.0)
    if above.size == 0 or above[0] == 0:
        return None
    k = int(above[0])
    return optimize.brentq(lambda t: path.evaluate(t)[0][0], path.ts[k - 1], path.ts[k], xtol=1e-14)


def capture_geodesic(
    m: MetricField,
    start,
    length: float = 2.0,
    h: float = 1e-3,
    tol: float = CAPTURE_TOL,
) -> Dict[str, object]:
    """
    Find a launch direction (1, p, q) from start whose geodesic crosses x1 = 0
    with gamma3 = dgamma3 = 0.

    Returns:
        Dict with captured flag, residual, the slopes (p, q) and the length of
        the continuation inside {x3 = 0, x1 > 0, |x2| <= 1}
    """
    start = np.asarray(start, dtype=float)

    def trace(pq):
        path = integrate_geodesic(m, start, np.array([1.0, pq[0], pq[1]]), length, h)
        tc = _crossing(path)
        if tc is None:
            raise IntegrationError("geodesic never reaches x1 = 0")
        x, v = path.evaluate(tc)
        return path, tc, x, v

    def residual(pq):
        try:
            _, _, x, v = trace(pq)
        except (DomainExitError, IntegrationError):
            return np.array([1e3, 1e3])
        return np.array([x[2], v[2] / max(v[0], 1e-12)])

    seed = np.array([0.0, -start[2] / max(-start[0], 1e-12)])
    solution = optimize.root(residual, seed, method="hybr", tol=1e-13)
    error = float(np.max(np.abs(residual(solution.x))))
    result = {"start": start.tolist(), "p": float(solution.x[0]), "q": float(solution.x[1]), "residual": error}
    if error > tol:
        result.update(captured=False, planar_length=0.0)
        return result

    path, tc, _, _ = trace(solution.x)
    after = path.ts > tc
    inside = after & (np.abs(path.xs[:, 1]) <= 1.0) & (np.abs(path.xs[:, 2]) <= 1e-6)
    planar_length = float(np.count_nonzero(inside) * path.h)
    result.update(captured=planar_length > 0.0, planar_length=planar_length)
    logger.debug(f"Capture from {start.tolist()}: residual {error:.2e}, planar length {planar_length:.3f}")
    return result


def capture_measure(
    m: MetricField,
    x1_start: float = -0.5,
    half_width: float = 0.05,
    n: int = 5,
    length: float = 2.0,
) -> Dict[str, object]:
    """Area of start points (x1_start, x2, x3), |x2|, |x3| <= half_width, whose capture succeeds."""
    values = np.linspace(-half_width, half_width, n)
    records = []
    for x2 in values:
        for x3 in values:
            if x3 == 0.0:
                # already in the plane; not a capture
                continue
            records.append(capture_geodesic(m, (x1_start, x2, x3), length))
    fraction = float(np.mean([r["captured"] for r in records])) if records else 0.0
    return {
        "x1_start": x1_start,
        "half_width": half_width,
        "samples": len(records),
        "captured_fraction": fraction,
        "captured_area": fraction * (2 * half_width) ** 2,
        "records": records,
    }


def nikodym_degenerate(config: ExperimentConfig) -> Dict[str, object]:
    """Run parts (a), (b), (c) on ms_perturbation(eps); findings are reported, not raised."""
    started = time.perf_counter()
    eps = _epsilon(config)
    options = config.command_options("nikodym-degenerate")
    m = ms_perturbation(eps)
    logger.info(f"nikodym-degenerate: epsilon = {eps:g}")

    plane = in_plane_defect(m, n_directions=int(options.get("directions", 16)), length=config.alpha)
    plane["passed"] = plane["max_gamma3"] <= config.tolerances.in_plane
    curvature = christoffel_check(m)
    capture = capture_measure(
        m,
        x1_start=float(options.get("x1_start", -0.5)),
        half_width=float(options.get("half_width", 0.05)),
        n=int(options.get("samples", 5)),
    )
    if not plane["passed"]:
        logger.warning(f"In-plane defect {plane['max_gamma3']:.3e} exceeds {config.tolerances.in_plane:g}")
    if eps != 0.0 and not curvature["nonzero"]:
        logger.warning("Gamma_12^3 vanishes at a sample with x1 < 0")

    return {
        "epsilon": eps,
        "in_plane": plane,
        "christoffel": curvature,
        "capture": capture,
        "runtime": time.perf_counter() - started,
    }
