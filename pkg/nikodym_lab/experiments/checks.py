"""
Module Check Reports

One report per geometry/operator layer, each a dict with scalar verdicts and
optional tabular "rows":

- curvature_report: tensor identities on every builtin metric, the Einstein
  test for constant curvature, rho against its closed form and chaotic margins
- fermi_check: geodesic engine accuracy, then Fermi chart conditions, round
  trips and radial rays
- taylor_check: third/fourth order geodesic coefficients against rho and rho'
- fold_check: the fold identities and the fold Hessian leading terms
- maximal_scaling: structural properties of the Nikodym maximal function and
  the tube geometry it rests on
"""

import logging
import math
import time
from typing import Dict, List, Tuple

import numpy as np

from ..canonical.folds import NOT_A_FOLD, verify_fold_leading_terms
from ..canonical.model import (
    affine_family,
    constant_family,
    family_from_metric,
    fold_identity_residuals,
    quadratic_family,
    shifted_sine_family,
)
from ..config import ExperimentConfig
from ..geometry.classifier import (
    axis_geodesic_samples,
    calibrate_sign,
    chaotic_margin,
    fermi_plane_defect,
    is_variably_curved,
    rho,
    rho_mean_over_psi,
    taylor_validate,
)
from ..geometry.fermi import FermiChart, axis_chart, radial_ray_defect, verify_fermi_conditions
from ..geometry.geodesic import integrate_geodesic
from ..geometry.metric import Box, MetricField, builtin_metric, euclidean, sogge_example, space_form
from ..geometry.tensors import christoffel, curvature, is_constant_curvature
from ..maximal.grid import ScalarField
from ..maximal.operators import (
    auxiliary_max,
    build_fold_adapted_weights,
    direction_net_family,
    nikodym_max,
    truncated_max,
)
from ..maximal.tubes import Tube, intersection_volume, separation_check
from .scaling import fit_slope

logger = logging.getLogger(__name__)

SUITE = (
    ("euclidean", ()),
    ("space_form", (1.0,)),
    ("space_form", (-1.0,)),
    ("ms_perturbation", (0.5,)),
    ("sogge_example", ()),
)
CONSTANT_CURVATURE = {"euclidean", "space_form"}


def _suite(config: ExperimentConfig) -> List[Tuple[str, MetricField]]:
    metrics = [(f"{name}{list(params) if params else ''}", builtin_metric(name, params)) for name, params in SUITE]
    if not isinstance(config.metric, str):
        metrics.append(("custom", config.build_metric()))
    return metrics


def _probe_points(m: MetricField, n: int, seed: int, half_width: float = 0.4) -> np.ndarray:
    rng = np.random.default_rng(seed)
    scale = min(half_width, 0.45 * float(np.min(m.domain.upper - m.domain.lower)) / 2)
    center = 0.5 * (m.domain.lower + m.domain.upper)
    return center + rng.uniform(-scale, scale, (n, 3))


def _chart_start(m: MetricField, alpha: float) -> float:
    """Origin when the padded axis segment fits the domain, else centered on it."""
    return 0.0 if m.domain.upper[0] > alpha + 0.3 else -alpha / 2


def _chart_for(m: MetricField, alpha: float) -> FermiChart:
    return axis_chart(m, alpha, start=(_chart_start(m, alpha), 0.0, 0.0))


# ========== Curvature ==========


def curvature_report(config: ExperimentConfig) -> Dict[str, object]:
    started = time.perf_counter()
    options = config.command_options("curvature-report")
    n = int(options.get("samples", 100))
    tol = config.tolerances
    rows = []
    for label, m in _suite(config):
        points = _probe_points(m, n, config.seed)
        data = curvature(m, points)
        constant = is_constant_curvature(m, points, tol=tol.tensor_residual)
        row = {
            "metric": label,
            "christoffel_symmetry": christoffel(m, points).symmetry_residual(),
            "riemann_symmetry": data.symmetry_residual(),
            "bianchi": data.bianchi_residual(),
            "einstein_trace": float(np.max(np.abs(data.einstein_trace()))),
            "max_einstein": constant["max_einstein"],
            "constant_curvature": constant["verdict"],
        }
        row["identities_pass"] = bool(
            row["riemann_symmetry"] <= tol.tensor_residual
            and row["bianchi"] <= tol.tensor_residual
            and row["einstein_trace"] <= tol.einstein_trace
        )
        expected = m.name in CONSTANT_CURVATURE
        if expected != row["constant_curvature"]:
            logger.warning(f"{label}: constant-curvature verdict {row['constant_curvature']}, expected {expected}")
        rows.append(row)

    sogge = sogge_example()
    peak = float(np.max(np.abs(curvature(sogge, np.array([math.pi / 2, 0.0, 0.0])).einstein)))

    rng = np.random.default_rng(config.seed)
    x1 = rng.uniform(-1.0, 1.0, n)
    psi = rng.uniform(0.0, math.pi, n)
    closed_form = float(np.max(np.abs(rho(sogge, x1, psi) - np.sin(2 * psi - x1))))
    axis_margin = chaotic_margin(
        sogge, integrate_geodesic(sogge, [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], config.alpha), method="chart"
    )

    m = config.build_metric()
    variably = is_variably_curved(m, axis_geodesic_samples(m, config.alpha, start=_chart_start(m, config.alpha)))
    return {
        "rows": rows,
        "sogge_einstein_at_half_pi": peak,
        "rho_closed_form_error": closed_form,
        "rho_closed_form_pass": closed_form <= tol.rho_closed_form,
        "rho_mean_over_psi": rho_mean_over_psi(sogge, 0.3),
        "sogge_axis_margin": axis_margin.to_dict(),
        "variably_curved": variably,
        "runtime": time.perf_counter() - started,
    }


# ========== Geodesics and Fermi charts ==========


def geodesic_accuracy(m: MetricField, alpha: float, h: float = 1e-3) -> Dict[str, float]:
    """Energy drift, reversal round trip and the RK4 step-halving error ratios."""
    direction = np.array([1.0, 0.3, 0.2])
    x0 = -0.5 * alpha * direction / np.linalg.norm(direction)
    path = integrate_geodesic(m, x0, direction, alpha, h)
    end, v_end = path.evaluate(path.t_max)
    back = integrate_geodesic(m, end, -v_end, alpha, h)
    round_trip = float(np.linalg.norm(back.evaluate(back.t_max)[0] - x0))

    steps = (0.04, 0.02, 0.01)
    reference = integrate_geodesic(m, x0, direction, alpha, steps[-1] / 8).xs[-1]
    errors = [float(np.linalg.norm(integrate_geodesic(m, x0, direction, alpha, s).xs[-1] - reference)) for s in steps]
    ratios = [a / max(b, 1e-300) for a, b in zip(errors, errors[1:])]
    return {
        "energy_drift": path.energy_residual(),
        "round_trip": round_trip,
        "step_errors": errors,
        "convergence_ratios": ratios,
    }


def _round_trip(chart: FermiChart, n: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    coords = np.column_stack(
        [rng.uniform(0.0, chart.alpha, n), rng.uniform(-0.5, 0.5, (n, 2)) * chart.radius]
    )
    return float(np.max(np.abs(chart.from_ambient(chart.to_ambient(coords)) - coords)))


def fermi_check(config: ExperimentConfig) -> Dict[str, object]:
    started = time.perf_counter()
    options = config.command_options("fermi-check")
    n = int(options.get("samples", 24))
    tol = config.tolerances
    m = config.build_metric()

    geodesic = geodesic_accuracy(m, config.alpha)
    geodesic["passed"] = bool(
        geodesic["energy_drift"] <= tol.energy_drift
        and geodesic["round_trip"] <= tol.round_trip
        and min(geodesic["convergence_ratios"]) >= 12.0
    )

    rows = []
    charts = [("space_form[1.0]", space_form(1.0)), ("sogge_example", sogge_example())]
    if config.metric_name not in ("sogge_example", "euclidean"):
        charts.append((config.metric_name, m))
    for label, metric in charts:
        chart = _chart_for(metric, config.alpha)
        conditions = verify_fermi_conditions(chart, tol=tol.fermi_residual, n_samples=n, seed=config.seed)
        row = {
            "metric": label,
            "radial_residual": conditions["radial_residual"],
            "axis_residual": conditions["axis_residual"],
            "conditions_pass": conditions["passed"],
            "round_trip": _round_trip(chart, n, config.seed),
            "radial_ray_defect": radial_ray_defect(chart, 0.5 * chart.alpha, (1.0, 1.0), 0.5 * chart.radius),
        }
        row["round_trip_pass"] = row["round_trip"] <= tol.chart_round_trip
        if metric.name == "sogge_example":
            coords = np.column_stack(
                [np.linspace(0.0, chart.alpha, n), np.full(n, 0.5 * chart.radius), np.full(n, -0.25 * chart.radius)]
            )
            row["identity_defect"] = float(np.max(np.abs(chart.to_ambient(coords) - coords)))
        rows.append(row)

    # rotating the normal frame by phi shifts rho(x1, psi) to rho(x1, psi + phi)
    sogge_chart = _chart_for(sogge_example(), config.alpha)
    phi, x1, psis = 0.4, 0.5, np.linspace(0.0, math.pi, 5)
    rotated = rho(sogge_chart.rotated(phi).pullback_metric(), x1, psis)
    shifted = rho(sogge_chart.pullback_metric(), x1, psis + phi)
    return {
        "geodesic": geodesic,
        "rows": rows,
        "rotation_residual": float(np.max(np.abs(rotated - shifted))),
        "runtime": time.perf_counter() - started,
    }


# ========== Taylor coefficients ==========


def taylor_check(config: ExperimentConfig) -> Dict[str, object]:
    started = time.perf_counter()
    options = config.command_options("taylor-check")
    probes = int(options.get("probes", 10))
    thetas = [float(t) for t in options.get("thetas", (0.1, 0.05, 0.025))]
    tol = config.tolerances
    sigma = calibrate_sign()

    metrics = [("sogge_example", sogge_example())]
    if config.metric_name != "sogge_example":
        metrics.append((config.metric_name, config.build_metric()))
    rng = np.random.default_rng(config.seed)
    rows = []
    for label, m in metrics:
        chart = _chart_for(m, config.alpha)
        for _ in range(probes):
            x1 = float(rng.uniform(0.2, 0.8) * chart.alpha)
            psi = float(rng.uniform(0.0, math.pi))
            result = taylor_validate(m, chart, x1, psi, thetas, sigma=sigma)
            rows.append(
                {
                    "metric": label,
                    "x1": x1,
                    "psi": psi,
                    "sigma": result["sigma"],
                    "rho": result["rho"],
                    "rho_prime": result["rho_prime"],
                    "third_rel_error": result["third_rel_error"],
                    "fourth_rel_error": result["fourth_rel_error"],
                    "third_pass": result["third_rel_error"] <= tol.taylor_third,
                    "fourth_pass": result["fourth_rel_error"] <= tol.taylor_fourth,
                    "converged": result["extrapolation_converged"],
                }
            )
        logger.info(f"taylor-check: {probes} probes on {label}")

    sogge = sogge_example()
    constant = space_form(1.0)
    return {
        "sigma": sigma,
        "sigma_consistent": all(r["sigma"] == sigma for r in rows),
        "rows": rows,
        "third_pass_fraction": float(np.mean([r["third_pass"] for r in rows])),
        "fourth_pass_fraction": float(np.mean([r["fourth_pass"] for r in rows])),
        "plane_defect_constant_curvature": fermi_plane_defect(
            constant, _chart_for(constant, config.alpha), 0.3, 0.4, 0.1
        ),
        "plane_defect_sogge": fermi_plane_defect(sogge, _chart_for(sogge, config.alpha), 0.3, 0.4, 0.1),
        "runtime": time.perf_counter() - started,
    }


# ========== Folds ==========


def identity_check(n: int = 1000, seed: int = 0, tol: float = 1e-12) -> Dict[str, object]:
    """Fold identity residuals: exact for affine rho, O(tau^2) for quadratic rho."""
    rng = np.random.default_rng(seed)
    x1 = rng.uniform(-1.0, 1.0, n)
    tau = rng.uniform(0.01, 0.1, n)
    affine = affine_family(0.7, -0.4)
    first, second = fold_identity_residuals(affine, x1, x1 + tau)
    affine_residual = float(max(np.max(np.abs(first)), np.max(np.abs(second))))

    quadratic = quadratic_family(0.3, 0.5, 0.8)
    taus = np.geomspace(0.1, 0.0125, 4)
    residuals = [float(np.abs(fold_identity_residuals(quadratic, 0.2, 0.2 + t)[0])) for t in taus]
    slope = fit_slope(taus, residuals)
    return {
        "affine_residual": affine_residual,
        "affine_pass": affine_residual <= tol,
        "quadratic_taus": taus.tolist(),
        "quadratic_residuals": residuals,
        "quadratic_slope": slope.slope,
    }


def fold_check(config: ExperimentConfig, progress: bool = False) -> Dict[str, object]:
    """
    Options (config.commands["fold-check"]):
        family: sine | metric (rho of the configured metric about its x1-axis)
        psi: plane angle of the family (default 0)
        taus: default [0.05, 0.025, 0.0125]
        trials: per tau (default 100)
    """
    started = time.perf_counter()
    options = config.command_options("fold-check")
    taus = [float(t) for t in options.get("taus", (0.05, 0.025, 0.0125))]
    trials = int(options.get("trials", 100))
    psi = float(options.get("psi", 0.0))
    if options.get("family", "sine") == "metric":
        family = family_from_metric(config.build_metric(), psi)
    else:
        family = shifted_sine_family(psi)

    identities = identity_check(seed=config.seed, tol=config.tolerances.identity)
    report = verify_fold_leading_terms(
        family, taus, trials=trials, seed=config.seed, threads=config.threads, progress=progress
    )
    flat = verify_fold_leading_terms(
        constant_family(0.0), taus[:1], trials=min(trials, 20), seed=config.seed, threads=config.threads
    )
    located = [
        r[f"{side}_classification"] for r in flat.records for side in ("right", "left") if r[f"{side}_located"]
    ]
    flat_fraction = float(np.mean([c == NOT_A_FOLD for c in located])) if located else 1.0
    return {
        "identities": identities,
        "folds": report.to_dict(),
        "flat_family_note": flat.note,
        "flat_not_a_fold_fraction": flat_fraction,
        "rows": [{"tau": tau, **summary} for tau, summary in report.summary.items()],
        "runtime": time.perf_counter() - started,
    }


# ========== Maximal function ==========


def _random_field(box: Box, spacing: float, rng: np.random.Generator, metric: MetricField) -> ScalarField:
    """Non-negative sum of a few Gaussian bumps."""
    centers = rng.uniform(box.lower, box.upper, (4, 3))
    heights = rng.uniform(0.2, 1.0, 4)
    widths = rng.uniform(0.1, 0.4, 4)

    def fn(p):
        d2 = np.sum((p[..., None, :] - centers) ** 2, axis=-1)
        return np.sum(heights * np.exp(-d2 / (2 * widths**2)), axis=-1)

    return ScalarField.from_function(box, spacing, fn, metric)


def maximal_properties(
    m: MetricField,
    delta: float,
    alpha: float,
    spacing: float,
    fields: int = 20,
    points: int = 6,
    net_size: int = 24,
    seed: int = 0,
    threads: int = 1,
    quadrature_tol: float = 1e-3,
) -> Dict[str, object]:
    """Monotonicity, sublinearity, homogeneity, sup bound, f = 1 and net refinement."""
    rng = np.random.default_rng(seed)
    box = Box.cube(alpha / 2 + 2 * delta + 0.15)
    eval_points = rng.uniform(-0.1, 0.1, (points, 3))
    family = direction_net_family(m, delta, alpha, net_size)
    finer = family.refined()

    def star(f, fam=family):
        return nikodym_max(m, f, delta, fam, eval_points=eval_points, threads=threads)

    one = ScalarField.constant(box, spacing, 1.0, m)
    violations = {k: 0 for k in ("monotone", "sublinear", "homogeneous", "sup_bound", "refinement")}
    for _ in range(fields):
        f = _random_field(box, spacing, rng, m)
        g = f.with_values(f.values + _random_field(box, spacing, rng, m).values)
        fs, gs = star(f), star(g)
        hs = star(g.with_values(g.values - f.values))
        violations["monotone"] += int(np.any(fs > gs + 1e-12))
        violations["sublinear"] += int(np.any(gs > fs + hs + 1e-12))
        violations["homogeneous"] += int(not np.allclose(star(f.with_values(2.5 * f.values)), 2.5 * fs, rtol=1e-12))
        violations["sup_bound"] += int(np.any(fs > np.max(np.abs(f.values)) + 1e-12))
        violations["refinement"] += int(np.any(star(f, finer) < fs - 1e-12))
    fixed_point = float(np.max(np.abs(star(one) - 1.0)))
    return {
        "fields": fields,
        "points": points,
        "net_size": net_size,
        "violations": violations,
        "fixed_point_error": fixed_point,
        "fixed_point_pass": fixed_point <= quadrature_tol,
        "passed": bool(not any(violations.values()) and fixed_point <= quadrature_tol),
    }


def tube_geometry(delta: float, lam: float, n_angles: int = 4, c: float = 0.2) -> List[Dict[str, object]]:
    """Euclidean intersection volumes of unit tubes crossing at the origin, against delta^3 / theta."""
    m = euclidean()
    grid = ScalarField.constant(Box.cube(0.5 + 2 * delta), delta / 3, 0.0, m)
    n = int(math.ceil(1.0 / (0.25 * delta))) + 1
    t = np.linspace(-0.5, 0.5, n)[:, None]

    def line(theta):
        d = np.array([math.cos(theta), math.sin(theta), 0.0])
        return Tube(m, t * d, np.broadcast_to(d, (n, 3)), delta)

    rows = []
    base = line(0.0)
    for theta in np.geomspace(4 * delta, 0.5, n_angles):
        other = line(theta)
        ratio = intersection_volume(m, base, other, grid) / (delta**3 / theta)
        separation = separation_check(m, base, other, (0.0, 0.0, 0.0), lam, grid, c=c)
        rows.append(
            {
                "theta": float(theta),
                "volume_ratio": ratio,
                "ratio_in_range": 0.25 <= ratio <= 16.0,
                "separation_applies": separation["applies"],
                "separation_holds": separation["holds"],
            }
        )
    return rows


def operator_sanity(
    m: MetricField, alpha: float, delta: float, spacing: float, lam: float, threads: int = 1
) -> Dict[str, object]:
    """
    Operators over geodesics meeting the axis, applied to f = 1. The undamped
    average is 1, the damped one stays below (alpha + 2 delta)^beta and the
    cutoff never exceeds the undamped value.
    """
    chart = _chart_for(m, alpha)
    box = Box.cube(1.5 * alpha + 2 * delta + 0.1, center=chart.to_ambient(np.array([alpha / 2, 0.0, 0.0])))
    one = ScalarField.constant(box, spacing, 1.0, m)
    disc = np.array([[0.05, 0.0], [0.0, -0.08]])
    unit = auxiliary_max(m, chart, one, delta, 0.0, disc, threads=threads)
    damped = auxiliary_max(m, chart, one, delta, 0.5, disc, half_geodesic=True, threads=threads)
    cut = truncated_max(m, chart, one, delta, 0.5 * (1.0 - lam) * alpha, disc, threads=threads)
    bound = (alpha + 2 * delta) ** 0.5
    return {
        "unit_error": float(np.max(np.abs(unit - 1.0))),
        "damped_max": float(np.max(damped)),
        "damped_bound": bound,
        "truncated_max": float(np.max(cut)),
        "passed": bool(
            np.max(np.abs(unit - 1.0)) <= 1e-9 and np.max(damped) <= bound and np.all(cut <= unit + 1e-12)
        ),
    }


def fold_weight_plateau(delta: float, alpha: float, n_tubes: int = 4) -> Dict[str, object]:
    """
    Fold-adapted weights for rho = sin(-x1) on straight Euclidean tubes about
    the x1-axis: the plateau constant of the bumps next to the measured
    fraction of tube volume where the weight is 1.
    """
    m = euclidean()
    weights = build_fold_adapted_weights(
        None, lambda x1: np.sin(-np.asarray(x1)), 0.5, 0.5 * alpha, 0.25 * alpha, 0.125 * alpha, alpha=alpha
    )
    n = int(math.ceil(alpha / (0.25 * delta))) + 1
    tubes = []
    for x1 in np.linspace(0.0, alpha, n_tubes, endpoint=False):
        t = np.linspace(x1 - alpha / 2, x1 + alpha / 2, n)
        points = np.column_stack([t, np.zeros(n), np.zeros(n)])
        tubes.append(Tube(m, points, np.tile([1.0, 0.0, 0.0], (n, 1)), delta, label={"x1": float(x1)}))
    pad = 2 * delta
    box = Box([-alpha / 2 - pad, -pad, -pad], [1.5 * alpha + pad, pad, pad])
    # the narrowest plateau spans alpha/32
    grid = ScalarField.constant(box, min(delta / 3, alpha / 64), 0.0, m)
    measured = weights.measured_fraction(m, tubes, grid)
    return {**weights.to_dict(), "measured_c0": measured, "tubes": len(tubes), "positive": measured > 0.0}


def maximal_scaling(config: ExperimentConfig, progress: bool = False) -> Dict[str, object]:
    """
    Options (config.commands["maximal-scaling"]):
        delta: default 2^-4
        fields: random fields (default 20)
        points: evaluation points per field (default 6)
        net_size: direction net size (default config.net_size or 24)
    """
    started = time.perf_counter()
    options = config.command_options("maximal-scaling")
    delta = float(options.get("delta", 2.0**-4))
    m = config.build_metric()
    properties = maximal_properties(
        m,
        delta,
        config.alpha,
        config.grid_spacing(delta),
        fields=int(options.get("fields", 20)),
        points=int(options.get("points", 6)),
        net_size=int(options.get("net_size", config.net_size or 24)),
        seed=config.seed,
        threads=config.threads,
        quadrature_tol=config.tolerances.quadrature,
    )
    geometry = tube_geometry(delta, config.lam)
    operators = operator_sanity(m, config.alpha, delta, delta / 2, config.lam, config.threads)
    if not properties["passed"]:
        logger.warning(f"Maximal function property violations: {properties['violations']}")
    return {
        "delta": delta,
        "properties": properties,
        "rows": geometry,
        "fold_weights": fold_weight_plateau(delta, config.alpha),
        "operators": operators,
        "runtime": time.perf_counter() - started,
    }
