"""
Maximal Operators

Nikodym maximal function over enumerated geodesic families, the auxiliary
(damped) and truncated operators over geodesics meeting a common geodesic,
fold-adapted weight tables and the two-dimensional strip maximal function.

Families come in two shapes:
- gather families enumerate the tubes through a given evaluation point
  (direction nets, near-axis cones, geodesics through the axis)
- scatter families enumerate a fixed list of tubes (fans); each tube's
  average is written onto the grid cells it covers with a running max
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import ndimage
from tqdm import tqdm

from ..errors import GridError, PreconditionError
from ..geometry.fermi import FermiChart
from ..geometry.geodesic import integrate_batch, shoot
from ..geometry.metric import MetricField
from .grid import ScalarField
from .tubes import VERTEX_SPACING_FACTOR, Tube, WeightSpec, tm_distance, tube_average

logger = logging.getLogger(__name__)

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def fibonacci_directions(n: int, hemisphere: bool = True) -> np.ndarray:
    """
    Quasi-uniform unit vectors on S^2 (or its upper half, for unoriented lines).
    """
    if n < 1:
        raise PreconditionError("direction net needs at least one direction")
    i = np.arange(n) + 0.5
    z = 1.0 - i / n if hemisphere else 1.0 - 2.0 * i / n
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = GOLDEN_ANGLE * np.arange(n)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def default_net_size(delta: float) -> int:
    """ceil(4 pi / delta^2) directions on the sphere, halved for unoriented lines."""
    return int(math.ceil(4.0 * math.pi / delta ** 2 / 2.0))


def _tubes_from_batch(
    m: MetricField,
    starts: np.ndarray,
    directions: np.ndarray,
    t_start: float,
    t_end: float,
    delta: float,
    anchors: Optional[np.ndarray] = None,
    labels: Optional[List[Dict[str, float]]] = None,
) -> List[Tube]:
    """Integrate many geodesics at once and wrap the valid ones as tubes."""
    _, xs, vs, valid = integrate_batch(
        m, starts, directions, t_start, t_end, VERTEX_SPACING_FACTOR * delta
    )
    tubes = []
    for k in np.flatnonzero(valid):
        tubes.append(
            Tube(
                m,
                xs[:, k],
                vs[:, k],
                delta,
                anchor=None if anchors is None else anchors[k],
                label=None if labels is None else labels[k],
            )
        )
    skipped = len(valid) - len(tubes)
    if skipped:
        logger.debug(f"Skipped {skipped} geodesics leaving the metric domain")
    return tubes


# ========== Families ==========


@dataclass
class GeodesicFamily:
    """
    An enumeration rule for the tubes entering a maximal function.

    kinds:
        direction_net  segments centered at the point, one per net direction
        near_axis      segments through the point within TM-distance c of gamma0
        through_axis   geodesics from (0, x') through gamma0(s), s on a height net
        fan            geodesics from (x1, 0, 0) with Fermi direction (theta, psi)
    """

    kind: str
    metric: MetricField
    delta: float
    alpha: float
    directions: Optional[np.ndarray] = None
    chart: Optional[FermiChart] = None
    c: float = 0.2
    heights: Optional[np.ndarray] = None
    fan_parameters: Optional[np.ndarray] = None
    fan_psi: float = 0.0
    _axis: Optional[Tube] = field(default=None, repr=False)

    @property
    def is_scatter(self) -> bool:
        return self.kind == "fan"

    def refined(self, factor: int = 2) -> "GeodesicFamily":
        """Same family with a superset direction net (never decreases the sup)."""
        if self.directions is None:
            raise PreconditionError(f"{self.kind} family has no direction net to refine")
        extra = fibonacci_directions(factor * len(self.directions))
        return replace(self, directions=np.vstack([self.directions, extra]))

    def axis_tube(self) -> Tube:
        """Tube about gamma0 on [0, alpha] (distance oracle for cutoffs and TM checks)."""
        if self.chart is None:
            raise PreconditionError(f"{self.kind} family has no chart")
        if self._axis is None:
            ts = np.linspace(0.0, self.chart.alpha, int(math.ceil(self.chart.alpha / (0.25 * self.delta))) + 1)
            x, v = self.chart.base.evaluate(ts)
            self._axis = Tube(self.metric, x, v, self.delta)
        return self._axis

    # ========== Enumeration ==========

    def tubes_through(self, point: np.ndarray) -> List[Tube]:
        """Tubes of a gather family through one evaluation point."""
        point = np.asarray(point, dtype=float)
        if self.kind == "direction_net":
            directions = self.directions
            starts = np.broadcast_to(point, directions.shape)
            return _tubes_from_batch(
                self.metric, starts, directions, -self.alpha / 2, self.alpha / 2, self.delta
            )
        if self.kind == "near_axis":
            return self._near_axis_tubes(point)
        if self.kind == "through_axis":
            return self._through_axis_tubes(point)
        raise PreconditionError(f"{self.kind} family is enumerated with tubes(), not per point")

    def _near_axis_tubes(self, point: np.ndarray) -> List[Tube]:
        x1 = float(np.clip(self.chart.from_ambient(point)[0], 0.0, self.chart.alpha))
        e = self.chart.frames(x1)
        net = self.directions
        # cone of half-angle c about E1, expressed in the (E1, E2, E3) frame
        cone = net[np.arccos(np.clip(net[:, 2], -1.0, 1.0)) <= self.c]
        ambient = cone[:, 2:3] * e[0] + cone[:, 0:1] * e[1] + cone[:, 1:2] * e[2]
        starts = np.broadcast_to(point, ambient.shape)
        tubes = _tubes_from_batch(
            self.metric, starts, ambient, -self.alpha / 2, self.alpha / 2, self.delta
        )
        axis = self.axis_tube()
        return [t for t in tubes if tm_distance(self.metric, t, axis) <= self.c]

    def _through_axis_tubes(self, disc_point: np.ndarray) -> List[Tube]:
        """disc_point is x' = (x2, x3); tubes start at (0, x') and pass through gamma0(s)."""
        start = self.chart.to_ambient(np.array([0.0, disc_point[0], disc_point[1]]))
        targets, _ = self.chart.base.evaluate(self.heights)
        velocities, labels = [], []
        for s, target in zip(self.heights, targets):
            velocities.append(shoot(self.metric, start, target))
            labels.append({"s": float(s), "x1": float(s)})
        velocities = np.array(velocities)
        starts = np.broadcast_to(start, velocities.shape)
        return _tubes_from_batch(
            self.metric, starts, velocities, 0.0, self.alpha, self.delta, targets, labels
        )

    def tubes(self) -> List[Tube]:
        """All tubes of a scatter family."""
        if self.kind != "fan":
            raise PreconditionError(f"{self.kind} family is enumerated per evaluation point")
        x1, theta = self.fan_parameters[:, 0], self.fan_parameters[:, 1]
        coords = np.column_stack([x1, np.zeros_like(x1), np.zeros_like(x1)])
        fermi_velocity = np.column_stack(
            [np.cos(theta), np.sin(theta) * np.cos(self.fan_psi), np.sin(theta) * np.sin(self.fan_psi)]
        )
        if self.chart is None:
            starts, velocities = coords, fermi_velocity
        else:
            starts = self.chart.to_ambient(coords)
            velocities = np.einsum("nij,nj->ni", self.chart.jacobian(coords), fermi_velocity)
        labels = [{"x1": float(a), "theta": float(b)} for a, b in self.fan_parameters]
        return _tubes_from_batch(
            self.metric, starts, velocities, -self.alpha / 2, self.alpha / 2, self.delta,
            anchors=starts, labels=labels,
        )


def direction_net_family(
    m: MetricField, delta: float, alpha: float, n_directions: Optional[int] = None
) -> GeodesicFamily:
    n = n_directions or default_net_size(delta)
    return GeodesicFamily("direction_net", m, delta, alpha, directions=fibonacci_directions(n))


def near_axis_family(
    m: MetricField,
    chart: FermiChart,
    delta: float,
    alpha: float,
    c: float = 0.2,
    n_directions: Optional[int] = None,
) -> GeodesicFamily:
    n = n_directions or default_net_size(delta)
    return GeodesicFamily(
        "near_axis", m, delta, alpha, directions=fibonacci_directions(n), chart=chart, c=c
    )


def through_axis_family(
    m: MetricField,
    chart: FermiChart,
    delta: float,
    alpha: float,
    upper_half: bool = False,
    height_spacing: Optional[float] = None,
) -> GeodesicFamily:
    """Geodesics through (0, x') and gamma0(s), s in (0, alpha] or [alpha/2, alpha]."""
    spacing = height_spacing or delta
    low = chart.alpha / 2 if upper_half else spacing
    heights = np.arange(chart.alpha, low - 1e-12, -spacing)[::-1]
    return GeodesicFamily("through_axis", m, delta, alpha, chart=chart, heights=heights)


def fan_family(
    m: MetricField,
    x1_values: Sequence[float],
    thetas: Sequence[float],
    alpha: float,
    delta: float,
    psi: float = 0.0,
    chart: Optional[FermiChart] = None,
) -> GeodesicFamily:
    """
    gamma_{x1 theta psi}: geodesics from (x1, 0, 0) with Fermi velocity
    (cos theta, sin theta cos psi, sin theta sin psi), t in [-alpha/2, alpha/2].

    Without a chart the metric is taken to be in Fermi form about its x1-axis.
    """
    grid = np.array([(a, b) for a in x1_values for b in thetas], dtype=float)
    return GeodesicFamily(
        "fan", m, delta, alpha, chart=chart, fan_parameters=grid, fan_psi=psi
    )


# ========== Nikodym maximal function ==========


def _sup_at_point(
    m: MetricField, f: ScalarField, family: GeodesicFamily, point: np.ndarray
) -> float:
    best, skipped = -math.inf, 0
    tubes = family.tubes_through(point)
    for tube in tubes:
        try:
            best = max(best, tube_average(m, tube, f))
        except GridError:
            skipped += 1
    if best == -math.inf:
        raise PreconditionError(f"no admissible tube through {point.tolist()}")
    if skipped:
        logger.warning(f"{skipped}/{len(tubes)} tubes through {point.tolist()} left the grid")
    return best


def nikodym_max(
    m: MetricField,
    f: ScalarField,
    delta: float,
    family: GeodesicFamily,
    eval_points: Optional[np.ndarray] = None,
    threads: int = 1,
    progress: bool = False,
):
    """
    f*_delta = sup of tube averages over the family's tubes through each point.

    Scatter families return a ScalarField on f's grid; gather families return
    one value per evaluation point (f's cell centers when eval_points is None,
    reshaped into a ScalarField).
    """
    if abs(family.delta - delta) > 1e-15:
        family = replace(family, delta=delta, _axis=None)

    if family.is_scatter:
        out = np.zeros(int(np.prod(f.shape)))
        tubes = family.tubes()
        if not tubes:
            raise PreconditionError("fan family produced no tube inside the domain")
        for tube in tqdm(tubes, desc="tubes", disable=not progress, leave=False):
            avg = tube_average(m, tube, f)
            cells = tube.cells(f)
            np.maximum.at(out, cells, avg)
        return f.with_values(out)

    on_grid = eval_points is None
    points = f.centers().reshape(-1, 3) if on_grid else np.atleast_2d(eval_points)

    def evaluate(point):
        return _sup_at_point(m, f, family, point)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(tqdm(pool.map(evaluate, points), total=len(points), disable=not progress, leave=False))
    else:
        values = [evaluate(p) for p in tqdm(points, disable=not progress, leave=False)]
    values = np.array(values)
    return f.with_values(values) if on_grid else values


# ========== Operators over geodesics meeting gamma0 ==========


def _disc_sup(
    m: MetricField,
    f: ScalarField,
    family: GeodesicFamily,
    disc_points: np.ndarray,
    weight_for: Callable[[Tube], WeightSpec],
    threads: int,
) -> np.ndarray:
    def evaluate(x_prime):
        values = [tube_average(m, t, f, weight_for(t)) for t in family.tubes_through(x_prime)]
        if not values:
            raise PreconditionError(f"no geodesic through (0, {x_prime.tolist()}) meets gamma0")
        return max(values)

    disc_points = np.atleast_2d(np.asarray(disc_points, dtype=float))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return np.array(list(pool.map(evaluate, disc_points)))
    return np.array([evaluate(p) for p in disc_points])


def auxiliary_max(
    m: MetricField,
    chart: FermiChart,
    f: ScalarField,
    delta: float,
    beta: float,
    disc_points: np.ndarray,
    half_geodesic: bool = False,
    threads: int = 1,
) -> np.ndarray:
    """
    sup over geodesics through (0, x') meeting gamma0 of the tube average
    damped by dist(y, gamma meets gamma0)^beta.

    half_geodesic restricts the meeting heights to [alpha/2, alpha].
    """
    family = through_axis_family(m, chart, delta, chart.alpha, upper_half=half_geodesic)
    spec = WeightSpec.unit() if beta == 0 else WeightSpec.damping(beta)
    return _disc_sup(m, f, family, disc_points, lambda tube: spec, threads)


def truncated_max(
    m: MetricField,
    chart: FermiChart,
    f: ScalarField,
    delta: float,
    lambda_cut: float,
    disc_points: np.ndarray,
    half_geodesic: bool = False,
    threads: int = 1,
) -> np.ndarray:
    """As auxiliary_max with unit weight and the integrand cut to dist(y, gamma0) >= lambda_cut."""
    family = through_axis_family(m, chart, delta, chart.alpha, upper_half=half_geodesic)
    spec = WeightSpec.cutoff(family.axis_tube(), lambda_cut)
    return _disc_sup(m, f, family, disc_points, lambda tube: spec, threads)


# ========== Fold-adapted weights ==========


def _smooth_step(u: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for u <= 0, 1 for u >= 1."""
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        b = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    return a / (a + b)


def smooth_bump(s, support: Sequence[float], plateau: Sequence[float]) -> np.ndarray:
    """Smooth bump supported in the open interval `support`, equal to 1 on `plateau`."""
    (a, b), (p, q) = support, plateau
    s = np.asarray(s, dtype=float)
    rise = _smooth_step((s - a) / (p - a))
    fall = _smooth_step((b - s) / (b - q))
    return rise * fall


@dataclass
class FoldWeights:
    """
    Table-driven tube weights a_gamma.

    c0 is the plateau fraction of the one-dimensional bumps over [0, alpha];
    measured_fraction gives |{y in T : a(y) >= 1}| / |T| on actual tubes.
    """

    spec: WeightSpec
    c0: float
    branches: Dict[str, float]
    bound: float

    def measured_fraction(self, m: MetricField, tubes: Sequence[Tube], grid: ScalarField) -> float:
        """Smallest plateau volume fraction over the tubes, from their grid cells."""
        if not tubes:
            raise PreconditionError("measured_fraction needs at least one tube")
        weights = grid.cell_weights(m)
        fractions = []
        for tube in tubes:
            cells = tube.cells(grid)
            a = self.spec.evaluate(tube, grid.centers(cells))
            fractions.append(float(np.sum(weights[cells][a >= 1.0 - 1e-12]) / np.sum(weights[cells])))
        logger.debug(f"Plateau fractions over {len(tubes)} tubes: min {min(fractions):.4g}, bound {self.c0:.4g}")
        return min(fractions)

    def to_dict(self) -> Dict[str, object]:
        return {"plateau_c0": self.c0, "branches": self.branches, "max_weight": self.bound}


def build_fold_adapted_weights(
    chart: Optional[FermiChart],
    rho_fn: Callable[[np.ndarray], np.ndarray],
    c1: float,
    alpha0: float,
    alpha1: float,
    alpha2: float,
    alpha: float = 1.0,
    samples: int = 129,
) -> FoldWeights:
    """
    a_gamma(y) = beta2(|x1 - y1|) where |rho(x1)| >= c1, beta1(|x1 - y1|) elsewhere,
    on the forward half y1 >= x1 of the tube; x1 is read from the tube label.

    beta1 is supported in (alpha1, alpha0) with plateau on the middle half,
    beta2 in (0, alpha2) with plateau [alpha2/4, alpha2/2].
    """
    if not (0.0 < alpha2 <= alpha1 < alpha0 <= alpha / 2) or c1 <= 0.0:
        raise PreconditionError(
            f"need 0 < alpha2 <= alpha1 < alpha0 <= alpha/2 and c1 > 0, got "
            f"({alpha2}, {alpha1}, {alpha0}, alpha={alpha}, c1={c1})"
        )
    quarter = (alpha0 - alpha1) / 4
    beta1 = lambda s: smooth_bump(s, (alpha1, alpha0), (alpha1 + quarter, alpha0 - quarter))
    beta2 = lambda s: smooth_bump(s, (0.0, alpha2), (alpha2 / 4, alpha2 / 2))
    to_fermi = chart.from_ambient if chart is not None else (lambda p: np.asarray(p, dtype=float))

    def table(tube: Tube, points: np.ndarray) -> np.ndarray:
        x1 = tube.label["x1"]
        y1 = to_fermi(points)[..., 0]
        s = y1 - x1
        strong = abs(float(np.asarray(rho_fn(np.asarray(x1))))) >= c1
        bump = beta2(np.abs(s)) if strong else beta1(np.abs(s))
        return np.where(s >= 0.0, bump, 0.0)

    fine = np.linspace(0.0, alpha, 4097)
    plateau = {
        "beta1": float(np.mean(beta1(fine) >= 1.0 - 1e-12)),
        "beta2": float(np.mean(beta2(fine) >= 1.0 - 1e-12)),
    }
    rho_samples = np.abs(np.asarray(rho_fn(np.linspace(0.0, alpha, samples)), dtype=float))
    branches = {}
    if np.any(rho_samples >= c1):
        branches["beta2"] = plateau["beta2"]
    if np.any(rho_samples < c1):
        branches["beta1"] = plateau["beta1"]
    c0 = min(branches.values()) if branches else 0.0
    if c0 <= 0.0:
        logger.warning("Fold-adapted weights have empty plateau; reporting c0 = 0")
    return FoldWeights(WeightSpec.table(table), c0, branches, bound=1.0)


# ========== Strip maximal function in the plane ==========


def cordoba_max_2d(
    values: np.ndarray,
    spacing: Sequence[float],
    origin: Sequence[float],
    delta: float,
    alpha: float,
    ts: Sequence[float],
    n_angles: int = 33,
    max_angle: float = math.pi / 4,
) -> np.ndarray:
    """
    g*_delta(t) = sup over segments of length alpha centered at (0, t) with
    angle <= max_angle to the first axis of delta^-1 int_strip |g|, the strip
    being the 2 delta wide neighborhood of the segment.

    g is given on a cell-centered grid and sampled bilinearly.
    """
    values = np.abs(np.asarray(values, dtype=float))
    spacing = np.asarray(spacing, dtype=float)
    origin = np.asarray(origin, dtype=float)
    ds = 0.5 * float(np.min(spacing))
    along = np.arange(-alpha / 2 + ds / 2, alpha / 2, ds)
    across = np.arange(-delta + ds / 2, delta, ds)
    cell_area = (alpha / len(along)) * (2 * delta / len(across))
    angles = np.linspace(-max_angle, max_angle, n_angles)

    out = np.empty(len(ts))
    for k, t in enumerate(ts):
        best = 0.0
        for phi in angles:
            u = np.array([math.cos(phi), math.sin(phi)])
            n = np.array([-u[1], u[0]])
            pts = (
                np.array([0.0, t])
                + along[:, None, None] * u
                + across[None, :, None] * n
            ).reshape(-1, 2)
            index = ((pts - origin) / spacing - 0.5).T
            sampled = ndimage.map_coordinates(values, index, order=1, mode="constant", cval=0.0)
            best = max(best, float(np.sum(sampled)) * cell_area / delta)
        out[k] = best
    return out
