"""
Maximal Operators

Grids, delta-tubes, Nikodym-type maximal functions over geodesic families
and the multiplicity combinatorics behind their bounds.
"""

from .combinatorics import BushResult, MultiplicityResult, bush_extract, multiplicity_select, tube_incidence
from .grid import ScalarField, lp_norm, region_field, superlevel_measure
from .operators import (
    FoldWeights,
    GeodesicFamily,
    auxiliary_max,
    build_fold_adapted_weights,
    cordoba_max_2d,
    default_net_size,
    direction_net_family,
    fan_family,
    fibonacci_directions,
    near_axis_family,
    nikodym_max,
    smooth_bump,
    through_axis_family,
    truncated_max,
)
from .tubes import (
    Tube,
    WeightSpec,
    intersection_volume,
    near_axis_fraction,
    separation_check,
    tm_distance,
    tube_angle,
    tube_average,
    volume,
)

__all__ = [
    "BushResult",
    "FoldWeights",
    "GeodesicFamily",
    "MultiplicityResult",
    "ScalarField",
    "Tube",
    "WeightSpec",
    "auxiliary_max",
    "build_fold_adapted_weights",
    "bush_extract",
    "cordoba_max_2d",
    "default_net_size",
    "direction_net_family",
    "fan_family",
    "fibonacci_directions",
    "intersection_volume",
    "lp_norm",
    "multiplicity_select",
    "near_axis_fraction",
    "near_axis_family",
    "nikodym_max",
    "region_field",
    "separation_check",
    "smooth_bump",
    "superlevel_measure",
    "through_axis_family",
    "tm_distance",
    "truncated_max",
    "tube_angle",
    "tube_average",
    "tube_incidence",
    "volume",
]
