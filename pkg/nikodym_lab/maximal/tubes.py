"""
Geodesic Tubes

A tube T = {y : dist(y, gamma) <= delta} about a sampled geodesic, with
grid-cell membership, weighted averages of scalar fields and the pairwise
geometry (TM-distance, intersection angle, intersection volume) used by the
maximal-function experiments.

Distances are measured with the metric frozen at the nearest center vertex,
accurate to O(delta^2) for the vertex spacing delta/4 used here.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Union

import numpy as np
from scipy.spatial import cKDTree

from ..errors import GridError, PreconditionError
from ..geometry.geodesic import GeodesicPath
from ..geometry.metric import MetricField
from .grid import ScalarField

logger = logging.getLogger(__name__)

VERTEX_SPACING_FACTOR = 0.25


class Tube:
    """
    delta-neighborhood of a geodesic segment given by its center polyline.

    Attributes:
        metric: Metric measuring distances
        points: Center polyline vertices (k, 3), spacing <= delta/4
        tangents: Unit tangents at the vertices (k, 3)
        delta: Tube radius
        anchor: Optional distinguished point (e.g. gamma meets gamma0)
        label: Free-form enumeration data (direction index, height, ...)
    """

    def __init__(
        self,
        metric: MetricField,
        points: np.ndarray,
        tangents: np.ndarray,
        delta: float,
        anchor: Optional[np.ndarray] = None,
        label: Optional[Dict[str, float]] = None,
    ):
        if delta <= 0:
            raise PreconditionError(f"tube radius must be positive, got {delta}")
        self.metric = metric
        self.points = np.asarray(points, dtype=float)
        self.tangents = np.asarray(tangents, dtype=float)
        self.delta = float(delta)
        self.anchor = None if anchor is None else np.asarray(anchor, dtype=float)
        self.label = dict(label or {})
        self._tree = cKDTree(self.points)
        self._g = metric.g(self.points)
        eigen = np.linalg.eigvalsh(self._g)
        # coordinate reach of a metric ball of radius delta
        self._stretch = 1.05 / math.sqrt(float(np.min(eigen)))
        self._cells: Dict[tuple, np.ndarray] = {}

    @classmethod
    def from_path(
        cls,
        path: GeodesicPath,
        delta: float,
        anchor: Optional[np.ndarray] = None,
        label: Optional[Dict[str, float]] = None,
    ) -> "Tube":
        points, tangents = path.polyline(VERTEX_SPACING_FACTOR * delta)
        return cls(path.metric, points, tangents, delta, anchor, label)

    def __repr__(self) -> str:
        return f"Tube(delta={self.delta:.4g}, length={self.length:.4g}, vertices={len(self.points)})"

    @property
    def length(self) -> float:
        segments = np.diff(self.points, axis=0)
        return float(np.sum(np.sqrt(np.einsum("ni,nij,nj->n", segments, self._g[:-1], segments))))

    def reversed(self) -> "Tube":
        return Tube(
            self.metric, self.points[::-1], -self.tangents[::-1], self.delta, self.anchor, self.label
        )

    # ========== Membership ==========

    def distance(self, points: np.ndarray) -> np.ndarray:
        """Distance from points (..., 3) to the center polyline."""
        points = np.asarray(points, dtype=float)
        flat = points.reshape(-1, 3)
        _, nearest = self._tree.query(flat)
        g = self._g[nearest]
        best = np.full(flat.shape[0], np.inf)
        last = len(self.points) - 1
        for shift in (-1, 0):
            start = np.clip(nearest + shift, 0, max(last - 1, 0))
            a = self.points[start]
            b = self.points[np.minimum(start + 1, last)]
            ab = b - a
            denom = np.maximum(np.sum(ab * ab, axis=-1), 1e-300)
            t = np.clip(np.sum((flat - a) * ab, axis=-1) / denom, 0.0, 1.0)
            diff = flat - (a + t[:, None] * ab)
            best = np.minimum(best, np.sqrt(np.einsum("ni,nij,nj->n", diff, g, diff)))
        return best.reshape(points.shape[:-1])

    def tangent_at(self, points: np.ndarray) -> np.ndarray:
        """Unit tangent of the nearest center vertex."""
        _, nearest = self._tree.query(np.asarray(points, dtype=float))
        return self.tangents[nearest]

    def contains(self, points: np.ndarray) -> np.ndarray:
        return self.distance(points) <= self.delta

    def cells(self, grid: ScalarField) -> np.ndarray:
        """
        Flat indices of the grid cells whose centers lie in the tube.

        Raises:
            GridError: grid spacing exceeds delta or the tube leaves the grid box
        """
        key = (tuple(grid.origin), tuple(grid.spacing), grid.shape)
        if key in self._cells:
            return self._cells[key]
        if np.min(grid.spacing) > self.delta:
            raise GridError(f"grid spacing {grid.spacing.tolist()} too coarse for delta={self.delta}")
        base, inside = grid.cell_index(self.points)
        if not np.all(inside):
            raise GridError("tube center leaves the grid box")

        reach = np.ceil(self.delta * self._stretch / grid.spacing).astype(int) + 1
        offsets = np.stack(
            np.meshgrid(*[np.arange(-k, k + 1) for k in reach], indexing="ij"), axis=-1
        ).reshape(-1, 3)
        anchors = np.unique(base, axis=0)
        candidates = (anchors[:, None, :] + offsets[None, :, :]).reshape(-1, 3)
        in_grid = np.all((candidates >= 0) & (candidates < np.array(grid.shape)), axis=-1)
        outside = candidates[~in_grid]
        if outside.size and np.any(self.distance(grid.origin + (outside + 0.5) * grid.spacing) <= self.delta):
            logger.debug(f"tube of radius {self.delta:.4g} crosses the boundary of {grid.box}")
            raise GridError("tube exits grid box")
        flat = np.unique(grid.flat_index(candidates[in_grid]))
        keep = self.distance(grid.centers(flat)) <= self.delta
        cells = flat[keep]
        if cells.size == 0:
            raise GridError("tube contains no grid cell centers")
        self._cells[key] = cells
        return cells


# ========== Weights ==========


@dataclass(frozen=True)
class WeightSpec:
    """
    Integrand weight a(y) inside a tube average.

    kinds:
        unit     a = 1
        damping  a = dist(y, anchor)^beta (anchor defaults to the tube's anchor)
        cutoff   a = 1 where dist(y, reference) >= radius, else 0
        table    a = fn(tube, points)
    """

    kind: str = "unit"
    beta: float = 0.0
    anchor: Optional[tuple] = None
    reference: Optional[Tube] = None
    radius: float = 0.0
    fn: Optional[Callable[[Tube, np.ndarray], np.ndarray]] = None

    @classmethod
    def unit(cls) -> "WeightSpec":
        return cls("unit")

    @classmethod
    def damping(cls, beta: float, anchor: Optional[Sequence[float]] = None) -> "WeightSpec":
        return cls("damping", beta=beta, anchor=None if anchor is None else tuple(anchor))

    @classmethod
    def cutoff(cls, reference: Tube, radius: float) -> "WeightSpec":
        return cls("cutoff", reference=reference, radius=radius)

    @classmethod
    def table(cls, fn: Callable[[Tube, np.ndarray], np.ndarray]) -> "WeightSpec":
        return cls("table", fn=fn)

    def evaluate(self, tube: Tube, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if self.kind == "unit":
            return np.ones(points.shape[:-1])
        if self.kind == "damping":
            anchor = tube.anchor if self.anchor is None else np.asarray(self.anchor)
            if anchor is None:
                raise PreconditionError("damping weight needs an anchor point")
            diff = points - anchor
            g = tube.metric.g(anchor)
            dist = np.sqrt(np.einsum("...i,ij,...j->...", diff, g, diff))
            return dist ** self.beta
        if self.kind == "cutoff":
            return (self.reference.distance(points) >= self.radius).astype(float)
        if self.kind == "table":
            return np.asarray(self.fn(tube, points), dtype=float)
        raise PreconditionError(f"unknown weight kind '{self.kind}'")


# ========== Averages and volumes ==========


def tube_average(
    m: MetricField,
    tube: Tube,
    f: ScalarField,
    weight: Optional[WeightSpec] = None,
    quadrature: str = "midpoint",
    samples: int = 4096,
    seed: int = 0,
) -> float:
    """
    |T|^-1 int_T |f| a dV.

    Midpoint quadrature over grid cells by default; quadrature="mc" draws
    `samples` seeded uniform points in the tube's bounding box instead.
    """
    weight = weight or WeightSpec.unit()
    if quadrature == "midpoint":
        cells = tube.cells(f)
        dv = f.cell_weights(m)[cells]
        points = f.centers(cells)
        values = np.abs(f.values.reshape(-1)[cells])
        return float(np.sum(values * weight.evaluate(tube, points) * dv) / np.sum(dv))
    if quadrature == "mc":
        rng = np.random.default_rng(seed)
        reach = tube.delta * tube._stretch
        lower = tube.points.min(axis=0) - reach
        upper = tube.points.max(axis=0) + reach
        points = rng.uniform(lower, upper, size=(samples, 3))
        points = points[tube.contains(points)]
        if points.shape[0] == 0:
            raise GridError("no Monte Carlo sample landed in the tube")
        dv = m.sqrt_det(points)
        values = np.abs(f.sample(points))
        return float(np.sum(values * weight.evaluate(tube, points) * dv) / np.sum(dv))
    raise PreconditionError(f"unknown quadrature '{quadrature}'")


def volume(m: MetricField, tube: Tube, grid: ScalarField) -> float:
    return float(np.sum(grid.cell_weights(m)[tube.cells(grid)]))


def intersection_volume(m: MetricField, first: Tube, second: Tube, grid: ScalarField) -> float:
    common = np.intersect1d(first.cells(grid), second.cells(grid), assume_unique=True)
    return float(np.sum(grid.cell_weights(m)[common]))


def tube_angle(m: MetricField, first: Tube, second: Tube, grid: ScalarField) -> float:
    """
    Minimum angle between the two center tangents over the common cells.

    Returns +inf when the tubes do not intersect on the grid.
    """
    common = np.intersect1d(first.cells(grid), second.cells(grid), assume_unique=True)
    if common.size == 0:
        return math.inf
    points = grid.centers(common)
    u, v = first.tangent_at(points), second.tangent_at(points)
    g = m.g(points)
    cosine = np.abs(np.einsum("ni,nij,nj->n", u, g, v)) / np.sqrt(
        np.einsum("ni,nij,nj->n", u, g, u) * np.einsum("ni,nij,nj->n", v, g, v)
    )
    return float(np.min(np.arccos(np.clip(cosine, 0.0, 1.0))))


def _polyline(curve: Union[Tube, GeodesicPath], spacing: Optional[float]):
    if isinstance(curve, Tube):
        return curve.points, curve.tangents
    return curve.polyline(spacing or 0.01)


def tm_distance(
    m: MetricField,
    first: Union[Tube, GeodesicPath],
    second: Union[Tube, GeodesicPath],
    spacing: Optional[float] = None,
) -> float:
    """
    Unit-tangent-bundle distance min over sampled (x, tangent) pairs.

    Position and tangent differences are combined in coordinates; tangents
    are compared up to orientation.
    """
    x1, v1 = _polyline(first, spacing)
    x2, v2 = _polyline(second, spacing)
    v1 = v1 / m.norm(x1, v1)[:, None]
    v2 = v2 / m.norm(x2, v2)[:, None]
    tree = cKDTree(np.vstack([np.hstack([x2, v2]), np.hstack([x2, -v2])]))
    dist, _ = tree.query(np.hstack([x1, v1]))
    return float(np.min(dist))


def separation_check(
    m: MetricField,
    first: Tube,
    second: Tube,
    center: Sequence[float],
    lam: float,
    grid: ScalarField,
    c: float = 0.2,
) -> Dict[str, object]:
    """
    Tubes meeting at angle >= delta / (c lam) must intersect only inside B(center, lam).

    Returns:
        Report with the angle, the threshold, whether the hypothesis applies
        and whether the intersection outside the ball is empty
    """
    angle = tube_angle(m, first, second, grid)
    threshold = first.delta / (c * lam)
    common = np.intersect1d(first.cells(grid), second.cells(grid), assume_unique=True)
    center = np.asarray(center, dtype=float)
    points = grid.centers(common)
    diff = points - center
    g = m.g(center)
    outside = np.sqrt(np.einsum("ni,ij,nj->n", diff, g, diff)) > lam
    applies = bool(angle >= threshold)
    empty = bool(not np.any(outside))
    return {
        "angle": angle,
        "threshold": threshold,
        "applies": applies,
        "outside_cells": int(np.count_nonzero(outside)),
        "holds": bool(empty or not applies),
    }


def near_axis_fraction(
    m: MetricField, tube: Tube, axis: Tube, radius: float, grid: ScalarField
) -> float:
    """|{y in T : dist(y, axis) <= radius}| / |T|."""
    cells = tube.cells(grid)
    dv = grid.cell_weights(m)[cells]
    near = axis.distance(grid.centers(cells)) <= radius
    return float(np.sum(dv[near]) / np.sum(dv))
