"""
Discrete Bound Harness

Evaluates both sides of the discrete tube inequalities on a tube family and
a set E sampled on a grid:

    M delta^2 <= C (delta^(-1/2 - eps) lambda^(-5/2) |E|)^(4/3)     (all directions)
    M delta^2 <= C (delta^(-2/3 - eps) |E|)^(4/3)                   (geodesics through gamma0)

together with the multiplicity selection, the bush extraction and the
incidence lower bound |E| >= lambda M delta^2 / (C N).

Synthetic Euclidean families:
- sliding_bush: directions spread in a cap, centers sliding along the x1-axis
- disjoint: parallel tubes at separation 4 delta (E = union gives N = 1)
- common_point: every tube through the origin
"""

import logging
import math
import time
from typing import Dict, List, Optional

import numpy as np

from ..config import ExperimentConfig
from ..errors import ConfigError, PreconditionError
from ..geometry.metric import Box, MetricField, euclidean
from ..maximal.combinatorics import bush_extract, multiplicity_select
from ..maximal.grid import ScalarField
from ..maximal.tubes import VERTEX_SPACING_FACTOR, Tube

logger = logging.getLogger(__name__)

FAMILIES = ("sliding_bush", "disjoint", "common_point")
DEFAULT_DELTA = 2.0**-5
DEFAULT_TUBES = 24
DEFAULT_CONSTANT = 10.0
DEFAULT_EPSILON = 0.01


def _straight_tube(m: MetricField, center: np.ndarray, direction: np.ndarray, alpha: float, delta: float) -> Tube:
    direction = direction / np.linalg.norm(direction)
    n = max(2, int(math.ceil(alpha / (VERTEX_SPACING_FACTOR * delta))) + 1)
    t = np.linspace(-alpha / 2, alpha / 2, n)
    points = center + t[:, None] * direction
    return Tube(m, points, np.broadcast_to(direction, points.shape), delta, anchor=center)


def synthetic_family(
    kind: str,
    delta: float,
    count: int = DEFAULT_TUBES,
    alpha: float = 1.0,
    spread: float = 0.3,
) -> List[Tube]:
    """Straight delta-tubes of length alpha in Euclidean space."""
    m = euclidean(Box.cube(2.0))
    index = np.arange(count)
    if kind == "disjoint":
        offsets = 4 * delta * (index - (count - 1) / 2)
        return [_straight_tube(m, np.array([0.0, o, 0.0]), np.array([1.0, 0.0, 0.0]), alpha, delta) for o in offsets]
    angles = spread * (2 * index / max(count - 1, 1) - 1)
    # small out-of-plane tilt keeps the directions distinct in S^2
    tilts = 0.5 * spread * np.sin(np.pi * index / max(count, 1))
    directions = np.column_stack([np.cos(angles), np.sin(angles), tilts])
    if kind == "common_point":
        centers = np.zeros((count, 3))
    elif kind == "sliding_bush":
        centers = np.column_stack([0.25 * alpha * (index / max(count - 1, 1) - 0.5), np.zeros(count), np.zeros(count)])
    else:
        raise ConfigError(f"unknown synthetic family '{kind}' (expected one of {FAMILIES})", field="family")
    return [_straight_tube(m, c, d, alpha, delta) for c, d in zip(centers, directions)]


def union_field(tubes: List[Tube], spacing: float) -> ScalarField:
    """Characteristic field of the union of the tubes on a grid covering them."""
    points = np.concatenate([t.points for t in tubes])
    pad = 2 * tubes[0].delta + 2 * spacing
    box = Box(points.min(axis=0) - pad, points.max(axis=0) + pad)
    E = ScalarField.constant(box, spacing, 0.0, tubes[0].metric)
    values = E.values.reshape(-1)
    for tube in tubes:
        values[tube.cells(E)] = 1.0
    return E


def bound_sides(M: int, delta: float, lam: float, e_measure: float, constant: float, eps: float) -> Dict[str, float]:
    lhs = M * delta**2
    all_directions = constant * (delta ** (-0.5 - eps) * lam ** (-2.5) * e_measure) ** (4 / 3)
    through_axis = constant * (delta ** (-2 / 3 - eps) * e_measure) ** (4 / 3)
    return {
        "lhs": lhs,
        "rhs_all_directions": all_directions,
        "rhs_through_axis": through_axis,
        "holds_all_directions": lhs <= all_directions,
        "holds_through_axis": lhs <= through_axis,
    }


def discrete_bound(config: ExperimentConfig, tubes: Optional[List[Tube]] = None, E: Optional[ScalarField] = None):
    """
    Options (config.commands["discrete-bound"]):
        family: sliding_bush | disjoint | common_point (default sliding_bush)
        delta: tube radius (default 2^-5)
        tubes: number of tubes (default 24)
        constant: C in the bounds (default 10)
        epsilon: eps in the exponents (default 0.01)
        e_path: ScalarField file to use as E instead of the union

    Raises:
        PreconditionError: E is empty or some tube has E-density below lambda
    """
    started = time.perf_counter()
    options = config.command_options("discrete-bound")
    delta = float(options.get("delta", DEFAULT_DELTA))
    constant = float(options.get("constant", DEFAULT_CONSTANT))
    eps = float(options.get("epsilon", DEFAULT_EPSILON))
    family = str(options.get("family", "sliding_bush"))
    lam = config.lam

    if tubes is None:
        tubes = synthetic_family(family, delta, int(options.get("tubes", DEFAULT_TUBES)), config.alpha)
    else:
        family = "external"
        delta = tubes[0].delta
    m = tubes[0].metric
    if E is None:
        E = ScalarField.load(options["e_path"], m) if "e_path" in options else union_field(tubes, config.grid_spacing(delta))
    e_measure = E.superlevel_measure(0.5, m)
    if e_measure <= 0.0:
        raise PreconditionError("E is empty; the density precondition cannot hold")

    M = len(tubes)
    logger.info(f"discrete-bound: {family} family, M={M}, delta={delta:g}, |E|={e_measure:.4g}")
    selection = multiplicity_select(m, E, tubes, delta, lam)
    bush = bush_extract(m, tubes, E)
    sides = bound_sides(M, delta, lam, e_measure, constant, eps)
    incidence_bound = lam * M * delta**2 / (constant * selection.N)
    logger.info(
        f"discrete-bound: N={selection.N}, theta={selection.theta:.4g}, mu={selection.mu:.4g}, "
        f"N0={bush.multiplicity}, bound holds: {sides['holds_all_directions']}"
    )
    if not (selection.low_multiplicity_holds and selection.incidence_holds):
        logger.warning("Multiplicity selection failed its re-check")

    return {
        "family": family,
        "delta": delta,
        "tubes": M,
        "lambda": lam,
        "constant": constant,
        "epsilon": eps,
        "e_measure": e_measure,
        "mean_tube_volume": bush.mean_tube_volume,
        "bounds": sides,
        "incidence_lower_bound": incidence_bound,
        "incidence_bound_holds": e_measure >= incidence_bound,
        "multiplicity": selection.to_dict(),
        "bush": bush.to_dict(),
        "runtime": time.perf_counter() - started,
    }
