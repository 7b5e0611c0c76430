"""
Geometry

Riemannian metrics, curvature tensors, geodesics, Fermi charts and the
chaotic-curvature classifier.
"""

from .classifier import (
    ChaoticMargin,
    calibrate_sign,
    chaotic_margin,
    fermi_plane_defect,
    is_variably_curved,
    rho,
    rho_from_ricci,
    rho_prime,
    taylor_validate,
)
from .fermi import FermiChart, axis_chart, build_fermi_chart, radial_ray_defect, verify_fermi_conditions
from .geodesic import (
    GeodesicPath,
    TransportFrame,
    exp_map,
    geodesic_between,
    integrate_geodesic,
    integrate_interval,
    integrate_segment,
    parallel_transport,
    taylor_coefficients,
)
from .metric import (
    BUILTIN_METRICS,
    Box,
    MetricField,
    builtin_metric,
    euclidean,
    fd_partial,
    ms_perturbation,
    parse_metric,
    sogge_example,
    space_form,
)
from .tensors import (
    ChristoffelData,
    CurvatureData,
    christoffel,
    curvature,
    is_constant_curvature,
    ricci_frame_component,
)

__all__ = [
    "BUILTIN_METRICS",
    "Box",
    "ChaoticMargin",
    "ChristoffelData",
    "CurvatureData",
    "FermiChart",
    "GeodesicPath",
    "MetricField",
    "TransportFrame",
    "axis_chart",
    "build_fermi_chart",
    "builtin_metric",
    "calibrate_sign",
    "chaotic_margin",
    "christoffel",
    "curvature",
    "euclidean",
    "exp_map",
    "fd_partial",
    "fermi_plane_defect",
    "geodesic_between",
    "integrate_geodesic",
    "integrate_interval",
    "integrate_segment",
    "is_constant_curvature",
    "is_variably_curved",
    "ms_perturbation",
    "parallel_transport",
    "parse_metric",
    "radial_ray_defect",
    "rho",
    "rho_from_ricci",
    "rho_prime",
    "sogge_example",
    "space_form",
    "taylor_coefficients",
    "taylor_validate",
    "verify_fermi_conditions",
]
