"""
nikodym-lab - numerical laboratory for Nikodym-type maximal functions
on curved three-dimensional manifolds.

Packages:
- geometry: metrics, curvature, geodesics, Fermi charts, curvature classifier
- maximal: grids, tubes, maximal operators, multiplicity combinatorics
- canonical: model maps of nearly-axial geodesic families and their folds
- experiments: scaling experiments and module check reports
- persistence: flat-file report storage
"""

__version__ = "0.1.0"

from .config import ExperimentConfig, Tolerances, load_config
from .errors import (
    ChartError,
    ConfigError,
    DomainExitError,
    ExpressionError,
    GridError,
    IntegrationError,
    MetricError,
    NikodymLabError,
    PreconditionError,
)
from .geometry import (
    Box,
    FermiChart,
    GeodesicPath,
    MetricField,
    build_fermi_chart,
    builtin_metric,
    curvature,
    integrate_geodesic,
    rho,
)
from .maximal import GeodesicFamily, ScalarField, Tube, nikodym_max

__all__ = [
    "Box",
    "ChartError",
    "ConfigError",
    "DomainExitError",
    "ExperimentConfig",
    "ExpressionError",
    "FermiChart",
    "GeodesicFamily",
    "GeodesicPath",
    "GridError",
    "IntegrationError",
    "MetricError",
    "MetricField",
    "NikodymLabError",
    "PreconditionError",
    "ScalarField",
    "Tolerances",
    "Tube",
    "__version__",
    "build_fermi_chart",
    "builtin_metric",
    "curvature",
    "integrate_geodesic",
    "load_config",
    "nikodym_max",
    "rho",
]
