"""
Experiments

Batch experiments behind the command-line surface:
- scaling: log-log slope fits and the ScalingReport container
- checks: per-module check reports (curvature, Fermi, Taylor, folds, maximal)
- counterexamples: the fan constructions in sogge_example and quartic-form metrics
- degenerate: geodesic capture for the degenerate perturbation metric
- boxdim: Minkowski dimension by box counting
- discrete: both sides of the discrete tube inequalities
"""

from .boxdim import boxdim, box_count, neighborhood_volume
from .checks import curvature_report, fermi_check, fold_check, maximal_scaling, taylor_check
from .counterexamples import (
    calibrate_fan_jacobian,
    counterexample_quartic,
    counterexample_sogge,
    image_measure,
    trapping_check,
)
from .degenerate import capture_geodesic, christoffel_check, in_plane_defect, nikodym_degenerate
from .discrete import bound_sides, discrete_bound, synthetic_family
from .scaling import ScalingReport, SlopeFit, fit_slope

__all__ = [
    "ScalingReport",
    "SlopeFit",
    "bound_sides",
    "box_count",
    "boxdim",
    "calibrate_fan_jacobian",
    "capture_geodesic",
    "christoffel_check",
    "counterexample_quartic",
    "counterexample_sogge",
    "curvature_report",
    "discrete_bound",
    "fermi_check",
    "fit_slope",
    "fold_check",
    "image_measure",
    "in_plane_defect",
    "maximal_scaling",
    "neighborhood_volume",
    "nikodym_degenerate",
    "synthetic_family",
    "taylor_check",
    "trapping_check",
]
