"""
Box Dimension

Minkowski dimension of a region from the volume scaling of its
delta-neighborhoods, |Omega_delta| ~ delta^(3 - dim), estimated by box
counting: |Omega_delta| is taken as N(delta) delta^3 with N(delta) the number
of half-open delta-boxes [j delta, (j+1) delta)^3 that contain a point of the
region.

Points of the region are found on an origin-aligned node lattice of spacing
delta / grid_factor, so lower-dimensional sets written as equalities
(abs(x3) <= 0) are hit exactly. Closed faces lying on a box boundary add one
layer of boxes; regions meant to be boxes are best written half-open.

The true neighborhood volume |{dist(x, Omega) <= delta}| is available as a
second column (Euclidean distance transform over the lattice).
"""

import logging
import math
import time
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy import ndimage

from ..config import ExperimentConfig
from ..errors import ConfigError, PreconditionError
from ..expressions import Region
from .scaling import ScalingReport

logger = logging.getLogger(__name__)

DEFAULT_EXTENT = 1.5
MAX_CELLS = 20_000_000
MIN_FIT_POINTS = 3
SLAB_NODES = 2_000_000


def _lattice_indices(lower: float, upper: float, h: float) -> np.ndarray:
    """Integers k with k h in [lower, upper]."""
    return np.arange(math.ceil(lower / h - 1e-9), math.floor(upper / h + 1e-9) + 1)


def _region_nodes(region: Region, lower, upper, delta: float, refine: int):
    """
    Yield integer lattice coordinates (k, 3) of region nodes in the box, one
    x1-slab at a time. Nodes sit at k delta / refine, exact for dyadic delta.
    """
    h = delta / refine
    axes = [_lattice_indices(lo, hi, h) for lo, hi in zip(lower, upper)]
    rows = max(1, SLAB_NODES // max(1, axes[1].size * axes[2].size))
    for start in range(0, axes[0].size, rows):
        block = [axes[0][start : start + rows], axes[1], axes[2]]
        mesh = np.stack(np.meshgrid(*block, indexing="ij"), axis=-1)
        inside = region.contains(mesh * delta / refine)
        if inside.any():
            yield mesh[inside]


def region_bounds(region: Region, extent: float, delta: float, refine: int):
    """Bounding box of the region's nodes on a lattice over [-extent, extent]^3."""
    found = [nodes for nodes in _region_nodes(region, [-extent] * 3, [extent] * 3, delta, refine)]
    if not found:
        raise PreconditionError(f"region has no lattice node in [-{extent}, {extent}]^3 at spacing {delta / refine:g}")
    nodes = np.concatenate(found)
    return nodes.min(axis=0) * delta / refine, nodes.max(axis=0) * delta / refine


def box_count(region: Region, delta: float, refine: int, lower, upper) -> int:
    """Number of half-open delta-boxes holding a region node at spacing delta / refine."""
    occupied = set()
    for nodes in _region_nodes(region, lower, upper, delta, refine):
        boxes = np.unique(np.floor_divide(nodes, refine), axis=0)
        occupied.update(map(tuple, boxes.tolist()))
    return len(occupied)


def neighborhood_volume(
    region: Region,
    delta: float,
    h: float,
    lower: np.ndarray,
    upper: np.ndarray,
    max_cells: int = MAX_CELLS,
) -> float:
    """
    Volume of the delta-neighborhood of the region's lattice nodes.

    The search box is the region's bounding box padded by delta + 2h. When it
    needs more than max_cells nodes, h is coarsened (with a warning).
    """
    lower, upper = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
    pad = delta + 2 * h
    cells = float(np.prod((upper - lower + 2 * pad) / h))
    if cells > max_cells:
        coarse = h * 2 ** math.ceil(math.log2((cells / max_cells) ** (1 / 3)))
        logger.warning(f"delta={delta:g}: {cells:.3g} nodes exceed {max_cells:g}, spacing {h:g} -> {coarse:g}")
        h = coarse
        pad = delta + 2 * h
    axes = [_lattice_indices(lo - pad, hi + pad, h) * h for lo, hi in zip(lower, upper)]
    mask = region.contains(np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1))
    if not mask.any():
        raise PreconditionError(f"region has no lattice node at spacing {h:g}")
    distance = ndimage.distance_transform_edt(~mask, sampling=h)
    return float(np.count_nonzero(distance <= delta + 1e-12) * h**3)


def _resolve_region(config: ExperimentConfig, region: Union[str, Sequence[str], None]) -> List[str]:
    if region is None:
        region = config.command_options("boxdim").get("region")
    if region is None:
        raise ConfigError("boxdim needs a region (name from [regions] or inequalities)", field="region")
    if isinstance(region, str) and region in config.regions:
        return list(config.regions[region])
    return [region] if isinstance(region, str) else list(region)


def boxdim(
    config: ExperimentConfig,
    region: Union[str, Sequence[str], None] = None,
    deltas: Optional[Sequence[float]] = None,
) -> ScalingReport:
    """
    Estimate the Minkowski dimension of a region as 3 - slope(log |Omega_delta| vs log delta).

    Options (config.commands["boxdim"]):
        region: region name or inequalities when not given as an argument
        extent: half-width of the box searched for the region (default 1.5)
        neighborhoods: also measure true delta-neighborhood volumes (default false)
        max_cells: lattice size cap for the neighborhood volumes (default 2e7)

    Raises:
        PreconditionError: fewer than three usable deltas
    """
    started = time.perf_counter()
    options = config.command_options("boxdim")
    inequalities = _resolve_region(config, region)
    deltas = list(deltas or config.deltas)
    if len(deltas) < MIN_FIT_POINTS:
        raise PreconditionError(f"boxdim needs at least {MIN_FIT_POINTS} deltas, got {len(deltas)}")
    shape = Region(inequalities)
    extent = float(options.get("extent", DEFAULT_EXTENT))
    refine = max(1, int(round(config.grid_factor)))
    with_neighborhoods = bool(options.get("neighborhoods", False))

    coarse_h = max(deltas) / refine
    lower, upper = region_bounds(shape, extent, max(deltas), refine)
    lower, upper = lower - coarse_h, upper + coarse_h

    report = ScalingReport("boxdim")
    columns = ["volume"]
    for delta in deltas:
        boxes = box_count(shape, delta, refine, lower, upper)
        row = {"boxes": boxes, "volume": boxes * delta**3}
        if with_neighborhoods:
            row["neighborhood_volume"] = neighborhood_volume(
                shape, delta, delta / refine, lower, upper, int(options.get("max_cells", MAX_CELLS))
            )
        logger.info(f"boxdim: delta = {delta:g}, {boxes} boxes, |Omega_delta| ~ {row['volume']:.6g}")
        report.add_row(delta, **row)
    if with_neighborhoods:
        columns.append("neighborhood_volume")

    usable = int(np.count_nonzero(report.column("volume") > 0))
    if usable < MIN_FIT_POINTS:
        raise PreconditionError(f"boxdim fit needs {MIN_FIT_POINTS} usable deltas, got {usable}")
    fits = report.fit(columns)
    report.runtime = time.perf_counter() - started
    report.extra = {
        "region": inequalities,
        "dimension": 3.0 - fits["volume"].slope,
        "dimension_band95": fits["volume"].band,
    }
    if with_neighborhoods:
        report.extra["neighborhood_dimension"] = 3.0 - fits["neighborhood_volume"].slope
    logger.info(f"boxdim: dimension estimate {report.extra['dimension']:.3f}")
    return report
