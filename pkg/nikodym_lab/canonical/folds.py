"""
Fold Analysis

Singular loci, fold Hessians and the leading-term check for the model
projection maps.

- find_singular_locus: sign-change bisection of det J along a seed line in
  the fixed-parameter space (xi for the right map, x' for the left map);
  det is linear along that line
- fold_hessian: kernel X and cokernel Y from the SVD of J, then
  |d^2/de^2 <chi(v + e X), Y>| by central differences
- verify_fold_leading_terms: random admissible trials per tau, Hessians
  against |z'| |rho/3 + rho' tau/12| (right) and |2 rho/3 + 3 rho' tau/4| (left)
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize
from tqdm import tqdm

from ..errors import PreconditionError
from .model import CallableMap, ModelFamily, ModelMap, fold_leading_terms

logger = logging.getLogger(__name__)

SINGULAR_TOL = 1e-8
RANK_TOL = 1e-4
DET_TOL = 1e-10
HESSIAN_TOL = 1e-6
HESSIAN_STEP_FACTOR = 1e-2

FOLD = "fold"
NOT_A_FOLD = "not a fold"
NOT_CLASSIFIABLE = "not fold-classifiable"

AnyMap = Union[ModelMap, CallableMap]


@dataclass
class SingularPoint:
    """A point where the map's Jacobian is singular, with the parameters that make it so."""

    model: ModelMap
    variables: np.ndarray
    det: float

    @property
    def tau(self) -> float:
        return float(self.model.tau(self.variables))


def _seed_line(model: ModelMap, v: np.ndarray):
    """Parameter line along which det is bisected, as t -> ModelMap."""
    if model.kind == "right":
        direction = v[1:] / np.linalg.norm(v[1:])
        normal = np.array([-direction[1], direction[0]])
        return lambda t: model.with_parameters(xi=t * direction + normal)
    eta = v[:2] / np.linalg.norm(v[:2])
    scale = np.linalg.norm(model.x[1:])
    normal = scale * np.array([-eta[1], eta[0]])
    return lambda t: model.with_parameters(x=np.concatenate([[model.x[0]], normal + t * eta]))


def _normalized(model: ModelMap) -> ModelMap:
    if model.kind == "right":
        return model.with_parameters(xi=model.xi / np.linalg.norm(model.xi))
    return model


def find_singular_locus(
    model: ModelMap,
    seeds: Sequence[np.ndarray],
    bracket: float = 1.0,
    det_tol: float = DET_TOL,
) -> Tuple[List[SingularPoint], int]:
    """
    Locate singular points of the map, one per seed.

    Each seed fixes the map variables; the parameters (xi for the right map,
    the transverse part of x for the left map) move along a line through the
    seed's normal direction until det J changes sign.

    Args:
        model: Map whose y1 (right) or x1 (left) parameter is already set
        seeds: Variable vectors (z for right, (eta1, eta2, y1) for left)
        bracket: Half-width of the bisection interval on the line parameter
        det_tol: Re-verification threshold on |det J| (xi normalized to |xi| = 1)

    Returns:
        (located points, number of seed lines skipped)
    """
    points: List[SingularPoint] = []
    skipped = 0
    for seed in seeds:
        v = np.asarray(seed, dtype=float)
        line = _seed_line(model, v)

        def det_at(t):
            return float(line(t).determinant(v))

        lo, hi = det_at(-bracket), det_at(bracket)
        if lo * hi > 0:
            logger.warning(f"No sign change of det on the seed line through {v.tolist()}, skipped")
            skipped += 1
            continue
        t = optimize.brentq(det_at, -bracket, bracket, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        found = _normalized(line(t))
        det = float(found.determinant(v))
        if abs(det) > det_tol:
            logger.warning(f"Singular point at {v.tolist()} failed re-verification (|det| = {abs(det):.2e})")
            skipped += 1
            continue
        logger.debug(f"Singular point at {v.tolist()}: line parameter {t:.6e}, det {det:.2e}")
        points.append(SingularPoint(found, v, det))
    return points, skipped


@dataclass
class FoldResult:
    """Hessian of the map at a singular point, paired between kernel and cokernel."""

    hess: float
    kernel: np.ndarray
    cokernel: np.ndarray
    singular_values: np.ndarray
    classification: str

    @property
    def is_fold(self) -> bool:
        return self.classification == FOLD

    def to_dict(self) -> Dict[str, object]:
        return {
            "hess": self.hess,
            "classification": self.classification,
            "singular_values": self.singular_values.tolist(),
            "kernel": self.kernel.tolist(),
            "cokernel": self.cokernel.tolist(),
        }


def fold_hessian(
    model: AnyMap,
    v: np.ndarray,
    step: Optional[float] = None,
    singular_tol: float = SINGULAR_TOL,
    rank_tol: float = RANK_TOL,
    hessian_tol: float = HESSIAN_TOL,
) -> FoldResult:
    """
    Fold Hessian |sum X_j X_k d^2 <chi, Y> / dx_j dx_k| at v.

    Args:
        model: Map with __call__ and jacobian
        v: Singular point
        step: Central-difference step along X (default 1e-2 |tau| for model maps)

    Returns:
        FoldResult; a Jacobian that is not of rank exactly 2 is reported as
        "not fold-classifiable" with hess = nan
    """
    v = np.asarray(v, dtype=float)
    U, s, Vt = np.linalg.svd(model.jacobian(v))
    X, Y = Vt[-1], U[:, -1]
    if s[-1] > singular_tol or s[-2] < rank_tol:
        return FoldResult(math.nan, X, Y, s, NOT_CLASSIFIABLE)

    if step is None:
        if not isinstance(model, ModelMap):
            raise PreconditionError("fold_hessian needs an explicit step for numerical maps")
        step = HESSIAN_STEP_FACTOR * abs(float(model.tau(v)))
    values = model(v + np.outer([-step, 0.0, step], X)) @ Y
    hess = abs(values[0] - 2 * values[1] + values[2]) / step**2
    return FoldResult(float(hess), X, Y, s, FOLD if hess > hessian_tol else NOT_A_FOLD)


def rank_margin(model: AnyMap, v: np.ndarray) -> np.ndarray:
    """Second-smallest singular value of the Jacobian (rank >= 2 certificate)."""
    return np.linalg.svd(model.jacobian(np.asarray(v, dtype=float)), compute_uv=False)[..., -2]


# ========== Leading-term verification ==========


@dataclass
class FoldReport:
    """Per-trial fold Hessians against their leading-term predictions."""

    family: str
    taus: List[float]
    records: List[Dict[str, object]]
    band: Tuple[float, float]
    min_rho: float
    flat: bool
    skipped: int = 0
    summary: Dict[str, Dict[str, float]] = field(default_factory=dict)

    @property
    def note(self) -> str:
        if self.flat:
            return "chaotic condition violated; no fold guaranteed"
        return ""

    def to_dict(self) -> Dict[str, object]:
        return {
            "family": self.family,
            "taus": self.taus,
            "band": list(self.band),
            "min_rho": self.min_rho,
            "flat": self.flat,
            "note": self.note,
            "skipped": self.skipped,
            "summary": self.summary,
            "records": self.records,
        }


def _side(model: ModelMap, seed: np.ndarray, prediction_fn) -> Dict[str, object]:
    located, _ = find_singular_locus(model, [seed])
    if not located:
        return {"located": False}
    point = located[0]
    fold = fold_hessian(point.model, point.variables)
    prediction = float(prediction_fn(point))
    ratio = fold.hess / prediction if prediction > 0 else math.nan
    return {
        "located": True,
        "hess": fold.hess,
        "prediction": prediction,
        "ratio": ratio,
        "classification": fold.classification,
        "rank_margin": float(fold.singular_values[-2]),
    }


def _fold_trial(
    family: ModelFamily,
    tau: float,
    rng: np.random.Generator,
    x1_range: Tuple[float, float],
    a_range: Tuple[float, float],
    c0: float,
) -> Dict[str, object]:
    x1 = float(rng.uniform(*x1_range))
    a = float(rng.uniform(*a_range))
    phi, omega = rng.uniform(0.0, 2 * math.pi, size=2)
    y1 = x1 + tau
    lead_r, lead_l = (float(v) for v in fold_leading_terms(family, x1, y1))
    rho, rho_prime = (float(v) for v in family.jets(x1, 1))

    z = np.array([x1, tau * a * math.cos(phi), tau * a * math.sin(phi)])
    right = _side(
        ModelMap("right", family, y1=y1, xi=(0.0, 1.0)),
        z,
        lambda pt: np.linalg.norm(pt.variables[1:]) * abs(lead_r),
    )
    eta = np.array([math.cos(omega), math.sin(omega)])
    x = np.array([x1, -a * eta[1], a * eta[0]])
    left = _side(ModelMap("left", family, x=x), np.array([eta[0], eta[1], y1]), lambda pt: abs(lead_l))

    record: Dict[str, object] = {"tau": tau, "x1": x1, "a": a, "rho": rho, "rho_prime": rho_prime}
    record.update({f"right_{k}": v for k, v in right.items()})
    record.update({f"left_{k}": v for k, v in left.items()})

    # at least one projection folds wherever the chaotic condition holds
    if abs(rho) + abs(rho_prime) >= c0 and right["located"] and left["located"]:
        record["remark_holds"] = bool(
            any(
                side["prediction"] > HESSIAN_TOL and side["hess"] >= 0.5 * side["prediction"]
                for side in (right, left)
            )
        )
    return record


def _summarize(records: List[Dict[str, object]], tau: float, band, min_rho: float) -> Dict[str, float]:
    rows = [r for r in records if r["tau"] == tau]
    summary: Dict[str, float] = {"trials": len(rows)}
    for side in ("right", "left"):
        located = [r for r in rows if r[f"{side}_located"]]
        strong = [r for r in located if abs(r["rho"]) >= min_rho and np.isfinite(r[f"{side}_ratio"])]
        ratios = np.array([r[f"{side}_ratio"] for r in strong])
        summary[f"{side}_located"] = len(located)
        summary[f"{side}_median_ratio"] = float(np.median(ratios)) if ratios.size else math.nan
        summary[f"{side}_fraction_in_band"] = (
            float(np.mean((ratios >= band[0]) & (ratios <= band[1]))) if ratios.size else math.nan
        )
        summary[f"{side}_not_a_fold"] = sum(r[f"{side}_classification"] == NOT_A_FOLD for r in located)
        summary[f"{side}_min_rank_margin"] = (
            float(min(r[f"{side}_rank_margin"] for r in located)) if located else math.nan
        )
    remarks = [r["remark_holds"] for r in rows if "remark_holds" in r]
    summary["remark_checked"] = len(remarks)
    summary["remark_violations"] = len(remarks) - sum(remarks)
    return summary


def verify_fold_leading_terms(
    family: ModelFamily,
    taus: Sequence[float],
    trials: int = 100,
    seed: int = 0,
    threads: int = 1,
    x1_range: Tuple[float, float] = (-0.5, 0.5),
    a_range: Tuple[float, float] = (0.5, 2.0),
    band: Tuple[float, float] = (0.8, 1.2),
    min_rho: float = 0.5,
    c0: float = 0.1,
    progress: bool = False,
) -> FoldReport:
    """
    Compare fold Hessians of both model maps with their leading terms.

    Trials draw x1, the transverse magnitude a and the in-plane angles from
    a generator seeded by (seed, tau index, trial index), so results do not
    depend on the worker count.

    Raises:
        PreconditionError: a tau outside [0.01, 0.1]
    """
    taus = [float(t) for t in taus]
    bad = [t for t in taus if not 0.01 <= t <= 0.1]
    if bad:
        raise PreconditionError(f"tau values must lie in [0.01, 0.1], got {bad}")

    jobs = [(i, t, k) for i, t in enumerate(taus) for k in range(trials)]

    def run(job):
        i, t, k = job
        rng = np.random.default_rng([seed, i, k])
        return _fold_trial(family, t, rng, x1_range, a_range, c0)

    logger.info(f"Fold check for {family.name}: {len(taus)} tau values x {trials} trials")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(tqdm(pool.map(run, jobs), total=len(jobs), disable=not progress, leave=False))
    else:
        records = [run(job) for job in tqdm(jobs, disable=not progress, leave=False)]

    flat = family.is_flat(np.linspace(*x1_range, 65))
    skipped = sum((not r["right_located"]) + (not r["left_located"]) for r in records)
    report = FoldReport(family.name, taus, records, band, min_rho, flat, skipped)
    report.summary = {f"{t:g}": _summarize(records, t, band, min_rho) for t in taus}
    if flat:
        logger.warning(f"{family.name}: rho and rho' vanish, {report.note}")
    return report
