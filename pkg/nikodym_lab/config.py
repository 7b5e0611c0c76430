"""
Experiment Configuration

TOML-backed run configuration:
- ExperimentConfig: metric, delta ladder, grid and net resolution, regions,
  output settings, seed, thread count and per-command option tables
- Tolerances: every numeric threshold used by the check commands
- load_config: read and validate a TOML file
- config_hash: SHA-256 of the resolved configuration, recorded in manifests

Example:

    metric = "sogge_example"
    deltas = [0.125, 0.0625, 0.03125]
    alpha = 1.0

    [regions]
    square = ["abs(x1) <= 1", "abs(x2) <= 1", "abs(x3) <= 0.01"]

    [tolerances]
    fermi_residual = 1e-5

    [commands.fold-check]
    trials = 50
"""

import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from .errors import ConfigError
from .geometry.metric import BUILTIN_METRICS, Box, MetricField, builtin_metric, parse_metric

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

DEFAULT_DELTAS = [2.0**-k for k in range(3, 8)]
OUTPUT_FORMATS = ("csv", "json")


@dataclass
class Tolerances:
    """Numeric thresholds for the check commands."""

    tensor_residual: float = 1e-9
    einstein_trace: float = 1e-10
    energy_drift: float = 1e-8
    round_trip: float = 1e-6
    fermi_residual: float = 1e-5
    chart_round_trip: float = 1e-7
    newton: float = 1e-12
    rho_closed_form: float = 1e-6
    taylor_third: float = 1e-3
    taylor_fourth: float = 1e-2
    identity: float = 1e-12
    singular: float = 1e-8
    rank: float = 1e-4
    det: float = 1e-10
    hessian: float = 1e-6
    quadrature: float = 1e-3
    in_plane: float = 1e-10
    slope: float = 0.08

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "Tolerances":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown tolerance(s) {sorted(unknown)}", field="tolerances")
        values = {}
        for key, value in data.items():
            if not isinstance(value, (int, float)) or value <= 0:
                raise ConfigError(f"must be a positive number, got {value!r}", field=f"tolerances.{key}")
            values[key] = float(value)
        return cls(**values)


@dataclass
class ExperimentConfig:
    """
    Resolved run configuration.

    Attributes:
        metric: Builtin metric name, or a table of g_jk expressions
        metric_params: Parameters of a builtin metric (K or epsilon)
        deltas: Tube radii, strictly descending
        alpha: Geodesic length
        grid_factor: Grid spacing is delta / grid_factor
        net_size: Direction-net size override (None = derived from delta)
        lam: Density parameter lambda
        regions: Named region definitions (lists of inequalities)
        out: Output directory
        format: csv | json for tabular reports
        svg: Write log-log scaling plots
        seed: Random seed for trials and fields
        threads: Worker threads (1 = inline)
        tolerances: Numeric thresholds
        commands: Per-command option tables
    """

    metric: Union[str, Dict[str, str]] = "sogge_example"
    metric_params: List[float] = field(default_factory=list)
    deltas: List[float] = field(default_factory=lambda: list(DEFAULT_DELTAS))
    alpha: float = 1.0
    grid_factor: float = 3.0
    net_size: Optional[int] = None
    lam: float = 0.9
    regions: Dict[str, List[str]] = field(default_factory=dict)
    out: str = "results"
    format: str = "csv"
    svg: bool = False
    seed: int = 0
    threads: int = 1
    tolerances: Tolerances = field(default_factory=Tolerances)
    commands: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        """
        Check the configuration invariants.

        Raises:
            ConfigError: naming the offending field
        """
        if not self.deltas:
            raise ConfigError("at least one delta is required", field="deltas")
        if any(not isinstance(d, (int, float)) or d <= 0 for d in self.deltas):
            raise ConfigError(f"deltas must be positive numbers, got {self.deltas}", field="deltas")
        if any(a <= b for a, b in zip(self.deltas, self.deltas[1:])):
            raise ConfigError(f"deltas must be strictly descending, got {self.deltas}", field="deltas")
        if not 0 < self.alpha <= 1:
            raise ConfigError(f"must lie in (0, 1], got {self.alpha}", field="alpha")
        if max(self.deltas) >= self.alpha / 4:
            raise ConfigError(
                f"every delta must be < alpha/4 = {self.alpha / 4:g}, got {max(self.deltas):g}",
                field="deltas",
            )
        if self.grid_factor < 1:
            raise ConfigError(f"must be >= 1, got {self.grid_factor}", field="grid_factor")
        if self.net_size is not None and self.net_size < 1:
            raise ConfigError(f"must be positive, got {self.net_size}", field="net_size")
        if not 0 < self.lam <= 1:
            raise ConfigError(f"must lie in (0, 1], got {self.lam}", field="lam")
        if self.format not in OUTPUT_FORMATS:
            raise ConfigError(f"must be one of {OUTPUT_FORMATS}, got '{self.format}'", field="format")
        if self.threads < 1:
            raise ConfigError(f"must be >= 1, got {self.threads}", field="threads")
        if isinstance(self.metric, str) and self.metric not in BUILTIN_METRICS:
            raise ConfigError(f"unknown builtin '{self.metric}' (expected one of {BUILTIN_METRICS})", field="metric")
        for name, inequalities in self.regions.items():
            if not inequalities or not all(isinstance(s, str) for s in inequalities):
                raise ConfigError("must be a non-empty list of inequality strings", field=f"regions.{name}")

    # ========== Derived values ==========

    @property
    def metric_name(self) -> str:
        return self.metric if isinstance(self.metric, str) else "custom"

    def build_metric(self, domain: Optional[Box] = None) -> MetricField:
        """Instantiate the configured metric (builtin or expression table)."""
        if isinstance(self.metric, str):
            return builtin_metric(self.metric, self.metric_params, domain)
        table = {k: v for k, v in self.metric.items() if k != "half_width"}
        half_width = float(self.metric.get("half_width", 1.0))
        return parse_metric(table, domain or Box.cube(half_width))

    def grid_spacing(self, delta: float) -> float:
        return delta / self.grid_factor

    def command_options(self, command: str) -> Dict[str, Any]:
        return dict(self.commands.get(command, {}))

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Copy with the given fields replaced; None values are ignored."""
        values = {k: v for k, v in overrides.items() if v is not None}
        if "metric" in values and values["metric"] != self.metric and "metric_params" not in values:
            values["metric_params"] = []
        try:
            return replace(self, **values)
        except TypeError as e:
            raise ConfigError(str(e))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 over the canonical JSON of the resolved config."""
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


_TOP_LEVEL = {f.name for f in fields(ExperimentConfig)}


def config_from_mapping(data: Mapping[str, Any]) -> ExperimentConfig:
    """
    Build a config from a parsed TOML document.

    Unknown top-level keys are logged and ignored.

    Raises:
        ConfigError: invalid field values
    """
    values: Dict[str, Any] = {}
    for key, value in data.items():
        if key not in _TOP_LEVEL:
            logger.warning(f"Ignoring unknown configuration key '{key}'")
            continue
        values[key] = value

    if "tolerances" in values:
        if not isinstance(values["tolerances"], Mapping):
            raise ConfigError("must be a table", field="tolerances")
        values["tolerances"] = Tolerances.from_mapping(values["tolerances"])
    if isinstance(values.get("metric"), Mapping):
        table = dict(values["metric"])
        if "name" in table:
            values["metric"] = str(table.pop("name"))
            values.setdefault("metric_params", table.pop("params", []))
        else:
            values["metric"] = {k: str(v) if k != "half_width" else v for k, v in table.items()}
    if "deltas" in values:
        values["deltas"] = [float(d) for d in values["deltas"]]
    if "regions" in values:
        values["regions"] = {
            name: [spec] if isinstance(spec, str) else list(spec) for name, spec in values["regions"].items()
        }
    try:
        return ExperimentConfig(**values)
    except TypeError as e:
        raise ConfigError(str(e))


def load_config(path: Union[str, Path, None]) -> ExperimentConfig:
    """
    Load a TOML configuration file; None gives the defaults.

    Raises:
        ConfigError: unreadable file, TOML syntax error or invalid values
    """
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    try:
        with open(path, "rb") as handle:
            data = tomllib.load(handle)
    except OSError as e:
        logger.error(f"Failed to read configuration {path}: {e}")
        raise ConfigError(f"cannot read {path}: {e}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path} is not valid TOML: {e}")
    config = config_from_mapping(data)
    logger.info(f"Loaded configuration from {path} (metric: {config.metric_name}, {len(config.deltas)} deltas)")
    return config
