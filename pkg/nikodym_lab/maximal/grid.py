"""
Scalar Fields on Regular Grids

Cell-centered sampling of functions on a box, with the Riemannian volume
element sqrt(det g) folded into per-cell quadrature weights.

Storage format (save/load):
- <name>.bin: little-endian int64 dims[3], float64 origin[3], float64
  spacing[3], then float64 values in C order
- <name>.bin.json: sidecar with shape, box, spacing, metric name and a
  free-form description
"""

import json
import logging
import math
from pathlib import Path
from typing import Callable, Dict, Iterable, Optional, Sequence, Union

import numpy as np

from ..errors import GridError
from ..expressions import Region
from ..geometry.metric import Box, MetricField

logger = logging.getLogger(__name__)

_HEADER_DTYPE = np.dtype("<i8")
_VALUE_DTYPE = np.dtype("<f8")


class ScalarField:
    """
    Values at the cell centers of a regular grid.

    Attributes:
        origin: Lower corner of the grid box
        spacing: Cell size per axis
        values: Array of shape (n1, n2, n3)
        metric: Metric supplying the volume element (None = Euclidean)
    """

    def __init__(
        self,
        origin: Sequence[float],
        spacing: Union[float, Sequence[float]],
        values: np.ndarray,
        metric: Optional[MetricField] = None,
    ):
        self.origin = np.asarray(origin, dtype=float).reshape(3)
        self.spacing = np.broadcast_to(np.asarray(spacing, dtype=float), (3,)).copy()
        self.values = np.asarray(values, dtype=float)
        if self.values.ndim != 3:
            raise GridError(f"field values must be 3-dimensional, got shape {self.values.shape}")
        if np.any(self.spacing <= 0):
            raise GridError(f"grid spacing must be positive, got {self.spacing}")
        self.metric = metric
        self._weights: Optional[np.ndarray] = None

    def __repr__(self) -> str:
        name = self.metric.name if self.metric is not None else "euclidean"
        return f"ScalarField(shape={self.shape}, spacing={self.spacing.tolist()}, metric='{name}')"

    # ========== Construction ==========

    @staticmethod
    def _layout(box: Box, spacing: Union[float, Sequence[float]]):
        extent = box.upper - box.lower
        target = np.broadcast_to(np.asarray(spacing, dtype=float), (3,))
        shape = tuple(max(1, int(math.ceil(e / s - 1e-9))) for e, s in zip(extent, target))
        return shape, extent / np.array(shape)

    @classmethod
    def from_function(
        cls,
        box: Box,
        spacing: Union[float, Sequence[float]],
        fn: Callable[[np.ndarray], np.ndarray],
        metric: Optional[MetricField] = None,
    ) -> "ScalarField":
        """Sample fn at the cell centers of the box (spacing rounded down to divide it)."""
        shape, actual = cls._layout(box, spacing)
        empty = cls(box.lower, actual, np.zeros(shape), metric)
        empty.values = np.asarray(fn(empty.centers()), dtype=float).reshape(shape)
        return empty

    @classmethod
    def constant(
        cls,
        box: Box,
        spacing: Union[float, Sequence[float]],
        value: float = 1.0,
        metric: Optional[MetricField] = None,
    ) -> "ScalarField":
        shape, actual = cls._layout(box, spacing)
        return cls(box.lower, actual, np.full(shape, float(value)), metric)

    def with_values(self, values: np.ndarray) -> "ScalarField":
        """A field on the same grid (sharing cached weights) with new values."""
        field = ScalarField(self.origin, self.spacing, np.asarray(values).reshape(self.shape), self.metric)
        field._weights = self._weights
        return field

    # ========== Geometry ==========

    @property
    def shape(self):
        return self.values.shape

    @property
    def box(self) -> Box:
        return Box(self.origin, self.origin + self.spacing * np.array(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.shape[axis]) + 0.5) * self.spacing[axis]

    def centers(self, flat_index: Optional[np.ndarray] = None) -> np.ndarray:
        """Cell centers, shape (n1, n2, n3, 3) or (k, 3) for flat indices."""
        if flat_index is None:
            mesh = np.meshgrid(*(self.axis_centers(a) for a in range(3)), indexing="ij")
            return np.stack(mesh, axis=-1)
        idx = np.stack(np.unravel_index(np.asarray(flat_index), self.shape), axis=-1)
        return self.origin + (idx + 0.5) * self.spacing

    def cell_index(self, points: np.ndarray):
        """
        Integer cell indices containing each point.

        Returns:
            (indices of shape (..., 3), mask of points inside the grid)
        """
        points = np.asarray(points, dtype=float)
        idx = np.floor((points - self.origin) / self.spacing).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < np.array(self.shape)), axis=-1)
        return idx, inside

    def flat_index(self, idx: np.ndarray) -> np.ndarray:
        return np.ravel_multi_index(tuple(np.moveaxis(idx, -1, 0)), self.shape)

    def sample(self, points: np.ndarray) -> np.ndarray:
        """Nearest-cell lookup; zero outside the grid."""
        idx, inside = self.cell_index(points)
        out = np.zeros(np.shape(points)[:-1])
        if np.any(inside):
            out[inside] = self.values.reshape(-1)[self.flat_index(idx[inside])]
        return out

    def cell_weights(self, metric: Optional[MetricField] = None) -> np.ndarray:
        """Riemannian cell volumes sqrt(det g) * cell volume (flat, C order)."""
        metric = metric if metric is not None else self.metric
        if metric is self.metric and self._weights is not None:
            return self._weights
        if metric is None:
            weights = np.full(int(np.prod(self.shape)), self.cell_volume)
        else:
            weights = metric.sqrt_det(self.centers().reshape(-1, 3)) * self.cell_volume
        if metric is self.metric:
            self._weights = weights
        return weights

    # ========== Integrals ==========

    def integral(self, metric: Optional[MetricField] = None) -> float:
        return float(np.sum(self.values.reshape(-1) * self.cell_weights(metric)))

    def lp_norm(self, p: float, metric: Optional[MetricField] = None) -> float:
        """(sum |f|^p dV)^(1/p); p = inf returns max |f|."""
        if p == math.inf:
            return float(np.max(np.abs(self.values)))
        if p < 1:
            raise GridError(f"L^p norm requires p >= 1, got {p}")
        total = np.sum(np.abs(self.values.reshape(-1)) ** p * self.cell_weights(metric))
        return float(total ** (1.0 / p))

    def superlevel_measure(self, level: float, metric: Optional[MetricField] = None) -> float:
        """Riemannian volume of {f >= level}."""
        mask = self.values.reshape(-1) >= level
        return float(np.sum(self.cell_weights(metric)[mask]))

    # ========== Persistence ==========

    def save(self, path: Union[str, Path], description: str = "") -> Path:
        """Write the binary field and its JSON sidecar."""
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "wb") as handle:
                handle.write(np.asarray(self.shape, dtype=_HEADER_DTYPE).tobytes())
                handle.write(self.origin.astype(_VALUE_DTYPE).tobytes())
                handle.write(self.spacing.astype(_VALUE_DTYPE).tobytes())
                handle.write(np.ascontiguousarray(self.values, dtype=_VALUE_DTYPE).tobytes())
            sidecar = {
                "shape": list(self.shape),
                "box": self.box.to_dict(),
                "spacing": self.spacing.tolist(),
                "metric": self.metric.name if self.metric is not None else "euclidean",
                "description": description,
            }
            Path(f"{path}.json").write_text(json.dumps(sidecar, indent=2))
        except OSError as e:
            logger.error(f"Failed to save scalar field to {path}: {e}")
            raise
        logger.debug(f"Saved {self} to {path}")
        return path

    @classmethod
    def load(cls, path: Union[str, Path], metric: Optional[MetricField] = None) -> "ScalarField":
        path = Path(path)
        try:
            raw = path.read_bytes()
        except OSError as e:
            logger.error(f"Failed to read scalar field {path}: {e}")
            raise
        dims = np.frombuffer(raw, dtype=_HEADER_DTYPE, count=3)
        origin = np.frombuffer(raw, dtype=_VALUE_DTYPE, count=3, offset=24)
        spacing = np.frombuffer(raw, dtype=_VALUE_DTYPE, count=3, offset=48)
        count = int(np.prod(dims))
        if len(raw) != 72 + 8 * count:
            raise GridError(f"{path}: expected {72 + 8 * count} bytes, found {len(raw)}")
        values = np.frombuffer(raw, dtype=_VALUE_DTYPE, count=count, offset=72)
        return cls(origin.copy(), spacing.copy(), values.reshape(tuple(int(d) for d in dims)).copy(), metric)

    def metadata(self) -> Dict[str, object]:
        return {"shape": list(self.shape), "spacing": self.spacing.tolist(), **self.box.to_dict()}


def region_field(
    box: Box,
    spacing: Union[float, Sequence[float]],
    inequalities: Union[str, Iterable[str]],
    metric: Optional[MetricField] = None,
) -> ScalarField:
    """Characteristic function of a region given as inequalities in x1, x2, x3."""
    region = Region(inequalities)
    return ScalarField.from_function(box, spacing, lambda p: region.contains(p).astype(float), metric)


def lp_norm(m: Optional[MetricField], f: ScalarField, p: float) -> float:
    return f.lp_norm(p, m)


def superlevel_measure(m: Optional[MetricField], f: ScalarField, level: float) -> float:
    return f.superlevel_measure(level, m)
