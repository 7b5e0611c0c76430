"""
Tube Combinatorics

Discrete multiplicity arguments over a family of delta-tubes and a set E
sampled on a grid:

- multiplicity_select: smallest multiplicity N such that half the tubes
  keep half their E-mass among points of multiplicity <= N, then the dyadic
  angle/shell scales (theta, mu) that maximize the number of tubes with a
  large set of (theta, mu)-incident neighbors
- bush_extract: the point of E covered by the most tubes
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from ..errors import PreconditionError
from ..geometry.metric import MetricField
from .grid import ScalarField
from .tubes import Tube, tube_angle

logger = logging.getLogger(__name__)


@dataclass
class TubeIncidence:
    """Cell memberships of a tube family restricted to a grid."""

    cells: List[np.ndarray]
    union: np.ndarray
    membership: np.ndarray  # (n_tubes, n_union) bool
    weights: np.ndarray  # Riemannian volume per union cell
    in_e: np.ndarray  # union cell lies in E

    @property
    def coverage(self) -> np.ndarray:
        return self.membership.sum(axis=0)

    def tube_volume(self, j: int) -> float:
        return float(np.sum(self.weights[self.membership[j]]))

    def density(self, j: int) -> float:
        """|E cap T_j| / |T_j|; a tube of zero volume has no density."""
        total = self.tube_volume(j)
        if not total > 0.0:
            raise PreconditionError(f"tube {j} has zero Riemannian volume on the grid")
        return float(np.sum(self.weights[self.membership[j] & self.in_e])) / total


def tube_incidence(m: MetricField, tubes: Sequence[Tube], E: ScalarField) -> TubeIncidence:
    cells = [t.cells(E) for t in tubes]
    union = np.unique(np.concatenate(cells))
    membership = np.zeros((len(tubes), union.size), dtype=bool)
    for j, c in enumerate(cells):
        membership[j, np.searchsorted(union, c)] = True
    weights = E.cell_weights(m)[union]
    in_e = E.values.reshape(-1)[union] > 0.5
    return TubeIncidence(cells, union, membership, weights, in_e)


@dataclass
class MultiplicityResult:
    """Output of multiplicity_select with the re-verified pigeonhole properties."""

    N: int
    theta: float
    mu: float
    low_multiplicity_tubes: List[int]
    incidence_tubes: List[int]
    required_low: float
    required_incidence: float
    log_factor: float
    counts_by_scale: Dict[str, int] = field(default_factory=dict)

    @property
    def low_multiplicity_holds(self) -> bool:
        return len(self.low_multiplicity_tubes) >= self.required_low

    @property
    def incidence_holds(self) -> bool:
        return len(self.incidence_tubes) >= self.required_incidence

    def to_dict(self) -> Dict[str, object]:
        return {
            "N": self.N,
            "theta": self.theta,
            "mu": self.mu,
            "low_multiplicity_count": len(self.low_multiplicity_tubes),
            "required_low": self.required_low,
            "incidence_count": len(self.incidence_tubes),
            "required_incidence": self.required_incidence,
            "log_factor": self.log_factor,
            "low_multiplicity_holds": self.low_multiplicity_holds,
            "incidence_holds": self.incidence_holds,
        }


def _low_multiplicity_tubes(inc: TubeIncidence, N: int, lam: float) -> List[int]:
    """Tubes j with |{x in T_j cap E : card{i : x in T_i} <= N}| >= (lam/2)|T_j|."""
    good = inc.in_e & (inc.coverage <= N)
    result = []
    for j in range(inc.membership.shape[0]):
        row = inc.membership[j]
        if np.sum(inc.weights[row & good]) >= 0.5 * lam * np.sum(inc.weights[row]):
            result.append(j)
    return result


def multiplicity_select(
    m: MetricField,
    E: ScalarField,
    tubes: Sequence[Tube],
    delta: float,
    lam: float,
) -> MultiplicityResult:
    """
    Pigeonhole selection of the multiplicity N and the dyadic scales (theta, mu).

    Raises:
        PreconditionError: some tube has |E cap T| < lam |T| or zero volume
    """
    if not tubes:
        raise PreconditionError("multiplicity_select needs at least one tube")
    inc = tube_incidence(m, tubes, E)
    M = len(tubes)

    for j in range(M):
        density = inc.density(j)
        if density < lam - 1e-12:
            raise PreconditionError(f"tube {j} has E-density {density:.4f} < lambda = {lam}")

    N = next(n for n in range(1, M + 1) if len(_low_multiplicity_tubes(inc, n, lam)) >= M / 2)
    low = _low_multiplicity_tubes(inc, N, lam)

    L = max(1.0, math.log2(1.0 / delta))
    scales = [delta * 2 ** k for k in range(int(math.floor(L)) + 1)]

    # pairwise angles between intersecting tubes (inf when disjoint)
    angles = np.full((M, M), math.inf)
    for i in range(M):
        for j in range(i + 1, M):
            if np.any(inc.membership[i] & inc.membership[j]):
                angles[i, j] = angles[j, i] = tube_angle(m, tubes[i], tubes[j], E)

    # shell mass: |T_i cap {y in E : dist(y, gamma_j) in [mu/2, mu]}|
    e_cells = [inc.membership[i] & inc.in_e for i in range(M)]
    centers = E.centers(inc.union)
    dist_to = np.stack([t.distance(centers) for t in tubes])
    volumes = np.array([inc.tube_volume(i) for i in range(M)])
    shell_threshold = lam / (2 * L)

    best = (-1, scales[0], scales[0], [])
    counts: Dict[str, int] = {}
    for theta in scales:
        angle_ok = (angles >= theta / 2) & (angles <= theta)
        for mu in scales:
            shell = np.zeros((M, M), dtype=bool)  # shell[i, j]
            for j in range(M):
                in_shell = (dist_to[j] >= mu / 2) & (dist_to[j] <= mu)
                for i in range(M):
                    mass = np.sum(inc.weights[e_cells[i] & in_shell])
                    shell[i, j] = mass >= shell_threshold * volumes[i]
            qualifying = []
            for j in range(M):
                incident = (angle_ok[:, j] & shell[:, j]).astype(int)
                card = incident @ inc.membership.astype(int)
                row = inc.membership[j] & inc.in_e
                mask = row & (card >= N / (2 * L) ** 2)
                if np.sum(inc.weights[mask]) >= lam / (4 * L) ** 2 * volumes[j]:
                    qualifying.append(j)
            counts[f"theta={theta:.4g},mu={mu:.4g}"] = len(qualifying)
            if len(qualifying) > best[0]:
                best = (len(qualifying), theta, mu, qualifying)

    result = MultiplicityResult(
        N=N,
        theta=best[1],
        mu=best[2],
        low_multiplicity_tubes=low,
        incidence_tubes=best[3],
        required_low=M / 2,
        required_incidence=M / (2 * L) ** 2,
        log_factor=L,
        counts_by_scale=counts,
    )
    logger.info(
        f"Multiplicity selection: N={N}, theta={result.theta:.4g}, mu={result.mu:.4g}, "
        f"{len(result.incidence_tubes)}/{M} incidence tubes"
    )
    return result


@dataclass
class BushResult:
    """Most-covered point of E and the quantities entering the bush bound."""

    point: np.ndarray
    multiplicity: int
    e_measure: float
    min_density: float
    mean_tube_volume: float

    def to_dict(self) -> Dict[str, object]:
        return {
            "point": self.point.tolist(),
            "multiplicity": self.multiplicity,
            "e_measure": self.e_measure,
            "min_density": self.min_density,
            "mean_tube_volume": self.mean_tube_volume,
        }


def bush_extract(m: MetricField, tubes: Sequence[Tube], E: ScalarField) -> BushResult:
    """Grid point of E maximizing the number of covering tubes."""
    if not tubes:
        raise PreconditionError("bush_extract needs at least one tube")
    inc = tube_incidence(m, tubes, E)
    coverage = np.where(inc.in_e, inc.coverage, 0)
    k = int(np.argmax(coverage))
    densities = [inc.density(j) for j in range(len(tubes))]
    return BushResult(
        point=E.centers(inc.union[k : k + 1])[0],
        multiplicity=int(coverage[k]),
        e_measure=E.superlevel_measure(0.5, m),
        min_density=float(min(densities)),
        mean_tube_volume=float(np.mean([inc.tube_volume(j) for j in range(len(tubes))])),
    )
