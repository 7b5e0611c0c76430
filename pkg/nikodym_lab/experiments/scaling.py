"""
Scaling Fits

Per-delta measurement tables and least-squares slopes in log-log space with
95% confidence bands from the Student t distribution.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from ..errors import PreconditionError

logger = logging.getLogger(__name__)


@dataclass
class SlopeFit:
    """log(value) = slope * log(delta) + intercept."""

    slope: float
    intercept: float
    residual: float
    band: float
    points: int

    def contains(self, expected: float, tolerance: float) -> bool:
        return abs(self.slope - expected) <= tolerance

    def to_dict(self) -> Dict[str, float]:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "residual": self.residual,
            "band95": self.band,
            "points": self.points,
        }


def fit_slope(deltas: Sequence[float], values: Sequence[float], confidence: float = 0.95) -> SlopeFit:
    """
    Ordinary least squares on (log delta, log value).

    Non-positive or non-finite values are dropped. With exactly two usable
    points the band is nan and a warning is logged.

    Raises:
        PreconditionError: fewer than two usable points
    """
    x = np.asarray(deltas, dtype=float)
    y = np.asarray(values, dtype=float)
    mask = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    x, y = np.log(x[mask]), np.log(y[mask])
    n = x.size
    if n < 2:
        raise PreconditionError(f"slope fit needs at least 2 usable points, got {n}")
    if n < 3:
        logger.warning("Slope fit on only 2 points; no residual or confidence band")
        slope, intercept = np.polyfit(x, y, 1)
        return SlopeFit(float(slope), float(intercept), math.nan, math.nan, n)

    (slope, intercept), cov = np.polyfit(x, y, 1, cov=True)
    residual = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    band = float(stats.t.ppf(0.5 + confidence / 2, n - 2) * np.sqrt(cov[0, 0])) if n > 2 else math.nan
    return SlopeFit(float(slope), float(intercept), residual, band, n)


@dataclass
class ScalingReport:
    """
    Measured quantities per delta with fitted log-log slopes.

    Attributes:
        name: Experiment name
        rows: One dict per delta; every row has a "delta" key
        expected: Expected slope per fitted column
        fits: Fitted slope per column
        runtime: Wall-clock seconds
        extra: Additional non-tabular results
    """

    name: str
    rows: List[Dict[str, float]] = field(default_factory=list)
    expected: Dict[str, float] = field(default_factory=dict)
    fits: Dict[str, SlopeFit] = field(default_factory=dict)
    runtime: float = 0.0
    extra: Dict[str, object] = field(default_factory=dict)

    def add_row(self, delta: float, **values: float) -> None:
        self.rows.append({"delta": float(delta), **{k: float(v) for k, v in values.items()}})

    def column(self, name: str) -> np.ndarray:
        return np.array([row.get(name, math.nan) for row in self.rows], dtype=float)

    def fit(self, columns: Optional[Sequence[str]] = None) -> Dict[str, SlopeFit]:
        """Fit every requested column (default: those with an expected slope)."""
        deltas = self.column("delta")
        for name in columns if columns is not None else list(self.expected):
            self.fits[name] = fit_slope(deltas, self.column(name))
        return self.fits

    def deviations(self) -> Dict[str, float]:
        return {k: self.fits[k].slope - v for k, v in self.expected.items() if k in self.fits}

    def passed(self, tolerance: float) -> Dict[str, bool]:
        return {k: abs(d) <= tolerance for k, d in self.deviations().items()}

    def to_dict(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "rows": self.rows,
            "expected": self.expected,
            "fits": {k: f.to_dict() for k, f in self.fits.items()},
            "deviations": self.deviations(),
            "runtime": self.runtime,
            **self.extra,
        }
