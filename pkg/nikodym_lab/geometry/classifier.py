"""
Curvature Classifier

Chaotic-curvature tests along geodesics and validation of the geodesic
Taylor-coefficient formulas in Fermi coordinates.

For a metric in Fermi form about its x1-axis the relevant quantity is

    rho(x1, psi) = 1/2 (cos psi d2 + sin psi d3)(sin psi d2 - cos psi d3) g11 |_(x1, 0, 0)

equivalently rho = -Ric(e_psi, f_psi) for the normal frame vectors
e_psi = cos psi E2 + sin psi E3 and f_psi = sin psi E2 - cos psi E3.
A geodesic satisfies the chaotic curvature condition when
|rho| + |d rho / d x1| never vanishes along it.

A geodesic launched from (x1, 0, 0) with Fermi velocity
(cos theta, sin theta cos psi, sin theta sin psi) has

    d^3 gamma_perp / dt^3 = sigma rho cos^2 theta sin theta + O(theta^2)
    d^4 gamma_perp / dt^4 = 2 sigma rho' cos^3 theta sin theta + O(theta^2)

where gamma_perp = <gamma, (0, -sin psi, cos psi)> and sigma = +-1 depends on
the curvature sign convention; calibrate_sign() measures it.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import PreconditionError
from .fermi import FermiChart, build_fermi_chart
from .geodesic import (
    GeodesicPath,
    TransportFrame,
    integrate_geodesic,
    integrate_segment,
    taylor_coefficients,
)
from .metric import MetricField, sogge_example
from .tensors import ricci_frame_component

logger = logging.getLogger(__name__)

PSI_SAMPLES = 64
T_SAMPLES_PER_UNIT = 64
MIN_THETA = 0.02
TAYLOR_STEP = 0.02
TAYLOR_HALF_LENGTH = 0.1

# sogge_example probe used to calibrate sigma
_CALIBRATION_PROBE = (0.7, 0.4, (0.1, 0.05, 0.025))


def _axis_points(x1) -> np.ndarray:
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    return np.stack([x1, np.zeros_like(x1), np.zeros_like(x1)], axis=-1)


def _g11_partial(m: MetricField, points: np.ndarray, index: Tuple[int, ...]) -> np.ndarray:
    return m.partial(points, index, 0, 0)


def rho(m_fermi: MetricField, x1, psi) -> np.ndarray:
    """
    rho(x1, psi) for a metric in Fermi form about its x1-axis.

    Vectorized over broadcastable x1 and psi.
    """
    x1, psi = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(psi, dtype=float))
    points = _axis_points(np.unique(x1))
    d22 = _g11_partial(m_fermi, points, (1, 1))
    d33 = _g11_partial(m_fermi, points, (2, 2))
    d23 = _g11_partial(m_fermi, points, (1, 2))
    idx = np.searchsorted(np.unique(x1), x1)
    return 0.5 * (
        0.5 * np.sin(2 * psi) * (d22[idx] - d33[idx]) - np.cos(2 * psi) * d23[idx]
    )


def rho_prime(m_fermi: MetricField, x1, psi) -> np.ndarray:
    """d rho / d x1 from third partials of g11 on the axis."""
    x1, psi = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(psi, dtype=float))
    unique = np.unique(x1)
    points = _axis_points(unique)
    d122 = _g11_partial(m_fermi, points, (0, 1, 1))
    d133 = _g11_partial(m_fermi, points, (0, 2, 2))
    d123 = _g11_partial(m_fermi, points, (0, 1, 2))
    idx = np.searchsorted(unique, x1)
    return 0.5 * (
        0.5 * np.sin(2 * psi) * (d122[idx] - d133[idx]) - np.cos(2 * psi) * d123[idx]
    )


def rho_from_ricci(m: MetricField, frame: TransportFrame, t, psi) -> np.ndarray:
    """
    rho = -Ric(e_psi, f_psi) in a parallel normal frame, with no chart.

    Args:
        frame: Transported (E2, E3) along the geodesic
        t: Parameters along frame.path
        psi: Angles (broadcast against t)
    """
    t, psi = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(psi, dtype=float))
    x, _ = frame.path.evaluate(t)
    E = frame.at(t)
    c, s = np.cos(psi)[..., None], np.sin(psi)[..., None]
    e = c * E[..., 0, :] + s * E[..., 1, :]
    f = s * E[..., 0, :] - c * E[..., 1, :]
    return -ricci_frame_component(m, x, e, f)


@dataclass
class ChaoticMargin:
    """Grid minimum of |rho| + |rho'| along one geodesic."""

    metric: str
    method: str
    ts: np.ndarray
    psis: np.ndarray
    values: np.ndarray
    ricci_crosscheck: Optional[float] = None

    @property
    def minimum(self) -> float:
        return float(np.min(self.values))

    @property
    def argmin(self) -> Tuple[float, float]:
        i, j = np.unravel_index(int(np.argmin(self.values)), self.values.shape)
        return float(self.ts[i]), float(self.psis[j])

    def to_dict(self) -> Dict[str, object]:
        t_min, psi_min = self.argmin
        return {
            "metric": self.metric,
            "method": self.method,
            "minimum": self.minimum,
            "argmin_t": t_min,
            "argmin_psi": psi_min,
            "n_t": int(len(self.ts)),
            "n_psi": int(len(self.psis)),
            "ricci_crosscheck": self.ricci_crosscheck,
        }


def _sample_grid(length: float, n_psi: int, t_per_unit: int):
    n_t = max(2, int(np.ceil(t_per_unit * length)))
    ts = np.linspace(0.0, length, n_t)
    psis = np.pi * np.arange(n_psi) / n_psi
    return ts, psis


def chaotic_margin(
    m: MetricField,
    path: GeodesicPath,
    n_psi: int = PSI_SAMPLES,
    t_per_unit: int = T_SAMPLES_PER_UNIT,
    method: str = "chart",
) -> ChaoticMargin:
    """
    min over a (t, psi) grid of |rho(t, psi)| + |d rho / dt (t, psi)|.

    method="chart" computes rho from the pulled-back metric of a Fermi chart
    about `path` and cross-checks the psi = 0 slice against Ric(E2, E3);
    method="ricci" uses the transported frame only and differentiates in t
    numerically.
    """
    ts, psis = _sample_grid(path.t_max, n_psi, t_per_unit)
    T, P = np.meshgrid(ts, psis, indexing="ij")

    if method == "chart":
        chart = build_fermi_chart(m, path)
        G = chart.pullback_metric()
        values = np.abs(rho(G, T, P)) + np.abs(rho_prime(G, T, P))
        ricci_slice = rho_from_ricci(m, chart.frame, ts, 0.0)
        crosscheck = float(np.max(np.abs(rho(G, ts, 0.0) - ricci_slice)))
    elif method == "ricci":
        frame = build_fermi_chart(m, path).frame
        rho_grid = rho_from_ricci(m, frame, T, P)
        drho = np.gradient(rho_grid, ts, axis=0, edge_order=2)
        values = np.abs(rho_grid) + np.abs(drho)
        crosscheck = None
    else:
        raise PreconditionError(f"unknown chaotic margin method '{method}'")

    margin = ChaoticMargin(m.name, method, ts, psis, values, crosscheck)
    logger.debug(f"Chaotic margin ({method}) for {m.name}: {margin.minimum:.4e}")
    return margin


def is_variably_curved(
    m: MetricField,
    geodesic_samples: Sequence[GeodesicPath],
    tol: float = 1e-3,
    method: str = "ricci",
) -> Dict[str, object]:
    """
    Variably-curved verdict over sampled geodesics.

    Returns:
        Report with the verdict (every margin >= tol), the worst margin and
        the per-geodesic margins
    """
    if not geodesic_samples:
        raise PreconditionError("is_variably_curved needs at least one geodesic")
    margins: List[float] = []
    for path in geodesic_samples:
        margins.append(chaotic_margin(m, path, method=method).minimum)
    worst = int(np.argmin(margins))
    return {
        "metric": m.name,
        "verdict": bool(min(margins) >= tol),
        "worst_margin": float(margins[worst]),
        "worst_index": worst,
        "margins": margins,
        "tolerance": tol,
    }


def axis_geodesic_samples(
    m: MetricField,
    alpha: float = 1.0,
    offsets: Sequence[Tuple[float, float]] = ((0.0, 0.0), (0.05, 0.0), (0.0, 0.05), (-0.05, 0.05)),
    start: float = 0.0,
) -> List[GeodesicPath]:
    """Geodesics leaving (start, a, b) along the first axis for each (a, b) offset."""
    return [
        integrate_geodesic(m, [start, a, b], [1.0, 0.0, 0.0], alpha) for a, b in offsets
    ]


# ========== Taylor coefficients ==========


def _extrapolate_to_zero(thetas: np.ndarray, values: np.ndarray) -> Tuple[float, bool]:
    """
    Polynomial (Neville) extrapolation to theta = 0.

    Returns the limit and whether successive extrapolants contract.
    """
    estimates = []
    for n in range(1, len(thetas) + 1):
        coeffs = np.polyfit(thetas[:n], values[:n], n - 1)
        estimates.append(float(np.polyval(coeffs, 0.0)))
    converged = True
    if len(estimates) >= 3:
        last, previous = abs(estimates[-1] - estimates[-2]), abs(estimates[-2] - estimates[-3])
        converged = last <= max(previous, 1e-9)
    return estimates[-1], converged


def _fermi_velocity(theta: float, psi: float) -> np.ndarray:
    return np.array(
        [np.cos(theta), np.sin(theta) * np.cos(psi), np.sin(theta) * np.sin(psi)]
    )


def _launch(chart: FermiChart, x1: float, fermi_velocity: np.ndarray, half_length: float):
    """Geodesic through chart point (x1, 0, 0) with the given Fermi-coordinate velocity."""
    origin = np.array([x1, 0.0, 0.0])
    point = chart.to_ambient(origin)
    velocity = chart.jacobian(origin) @ fermi_velocity
    return integrate_segment(chart.metric, point, velocity, half_length)


def _normalized_derivatives(
    chart: FermiChart, x1: float, psi: float, thetas: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    normal = np.array([0.0, -np.sin(psi), np.cos(psi)])
    third, fourth = [], []
    for theta in thetas:
        path = _launch(chart, x1, _fermi_velocity(theta, psi), TAYLOR_HALF_LENGTH)
        d = taylor_coefficients(path, 4, normal, TAYLOR_STEP, transform=chart.from_ambient)
        third.append(d[2] / (np.cos(theta) ** 2 * np.sin(theta)))
        fourth.append(d[3] / (np.cos(theta) ** 3 * np.sin(theta)))
    return np.array(third), np.array(fourth)


def _validated_thetas(thetas: Sequence[float]) -> np.ndarray:
    thetas = np.asarray(thetas, dtype=float)
    if thetas.size == 0 or np.any(thetas <= 0.0) or np.any(thetas > 0.3):
        raise PreconditionError("theta values must lie in (0, 0.3]")
    if np.any(np.diff(thetas) >= 0.0):
        raise PreconditionError("theta values must be sorted descending")
    if np.any(thetas < MIN_THETA):
        logger.warning(f"Clamping theta values below {MIN_THETA} (noise-dominated)")
        thetas = np.unique(np.maximum(thetas, MIN_THETA))[::-1]
    return thetas


@lru_cache(maxsize=1)
def calibrate_sign() -> int:
    """
    Sign sigma relating d^3 gamma_perp to rho, measured on sogge_example.

    Computed once per process and cached.
    """
    x1, psi, thetas = _CALIBRATION_PROBE
    m = sogge_example()
    chart = build_fermi_chart(m, integrate_geodesic(m, [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], 1.0))
    third, _ = _normalized_derivatives(chart, x1, psi, np.asarray(thetas))
    limit, _ = _extrapolate_to_zero(np.asarray(thetas), third)
    expected = float(np.sin(2 * psi - x1))
    sigma = 1 if limit * expected > 0 else -1
    logger.info(f"Calibrated Taylor sign sigma = {sigma} (limit {limit:.6f}, rho {expected:.6f})")
    return sigma


def taylor_validate(
    m: MetricField,
    chart: FermiChart,
    x1: float,
    psi: float,
    thetas: Sequence[float],
    sigma: Optional[int] = None,
) -> Dict[str, object]:
    """
    Compare normalized third and fourth derivatives of gamma_perp with
    sigma rho and 2 sigma rho', extrapolated to theta -> 0.

    Extrapolation divergence is reported in the result, not raised.
    """
    thetas = _validated_thetas(thetas)
    sigma = calibrate_sign() if sigma is None else sigma
    G = chart.pullback_metric()
    rho_value = float(rho(G, x1, psi)[()])
    rho_prime_value = float(rho_prime(G, x1, psi)[()])

    third, fourth = _normalized_derivatives(chart, x1, psi, thetas)
    third_limit, third_ok = _extrapolate_to_zero(thetas, third)
    fourth_limit, fourth_ok = _extrapolate_to_zero(thetas, fourth)
    predicted_third = sigma * rho_value
    predicted_fourth = 2 * sigma * rho_prime_value

    def relative(value: float, reference: float) -> float:
        return abs(value - reference) / max(abs(reference), 1e-12)

    report = {
        "metric": m.name,
        "x1": x1,
        "psi": psi,
        "thetas": thetas.tolist(),
        "sigma": sigma,
        "rho": rho_value,
        "rho_prime": rho_prime_value,
        "third_normalized": third.tolist(),
        "fourth_normalized": fourth.tolist(),
        "third_limit": third_limit,
        "fourth_limit": fourth_limit,
        "third_abs_error": abs(third_limit - predicted_third),
        "fourth_abs_error": abs(fourth_limit - predicted_fourth),
        "third_rel_error": relative(third_limit, predicted_third),
        "fourth_rel_error": relative(fourth_limit, predicted_fourth),
        "extrapolation_converged": bool(third_ok and fourth_ok),
    }
    if not report["extrapolation_converged"]:
        logger.warning(f"Theta extrapolation did not contract at x1={x1}, psi={psi}")
    return report


def fermi_plane_defect(
    m: MetricField, chart: FermiChart, x1: float, psi: float, theta: float, length: float = 0.2
) -> float:
    """
    max |gamma_perp| of a geodesic launched inside the Fermi two-plane
    spanned by E1 and e_psi, over t in [0, length].
    """
    origin = np.array([x1, 0.0, 0.0])
    velocity = chart.jacobian(origin) @ _fermi_velocity(theta, psi)
    path = integrate_geodesic(m, chart.to_ambient(origin), velocity, length)
    ts = np.linspace(0.0, length, 17)
    coords = chart.from_ambient(path.evaluate(ts)[0])
    normal = np.array([0.0, -np.sin(psi), np.cos(psi)])
    return float(np.max(np.abs(coords @ normal)))


def rho_mean_over_psi(m_fermi: MetricField, x1: float, n_psi: int = PSI_SAMPLES) -> float:
    """Mean of rho(x1, .) over psi in [0, pi); vanishes identically."""
    psis = np.pi * np.arange(n_psi) / n_psi
    return float(np.mean(rho(m_fermi, x1, psis)))
