"""
Report Store

Flat-file output for experiment runs:
- tables as CSV (pandas) or JSON records
- JSON reports with numpy values converted to plain Python
- manifest.json: config hash, package and library versions, runtimes,
  seed and thread count
- SVG log-log scaling plots with the fitted lines (matplotlib, Agg backend)
- binary scalar fields (delegated to ScalarField.save)

Layout:
- <out>/<command>/<name>.csv|json
- <out>/<command>/<name>.svg
- <out>/manifest.json
"""

import json
import logging
import math
import platform
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

logger = logging.getLogger(__name__)

TABLE_FORMATS = ("csv", "json")


def to_jsonable(value: Any) -> Any:
    """Recursively convert numpy scalars/arrays and paths into JSON-safe values."""
    if isinstance(value, Mapping):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "to_dict"):
        return to_jsonable(value.to_dict())
    return value


def library_versions() -> Dict[str, str]:
    from .. import __version__

    versions = {"nikodym_lab": __version__, "python": platform.python_version()}
    for package in ("numpy", "scipy", "pandas", "matplotlib", "click", "rich"):
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = "unknown"
    return versions


class ReportStore:
    """
    Writes experiment outputs under one directory.

    Responsibilities:
    - Create the output directory tree
    - Serialize tables, reports and plots
    - Track per-command runtimes for the manifest
    """

    def __init__(self, out_dir: Union[str, Path] = "results", table_format: str = "csv", svg: bool = False):
        """
        Initialize the store and ensure the output directory exists.

        Args:
            out_dir: Root output directory (created if missing)
            table_format: csv | json for write_table
            svg: Whether scaling plots are written
        """
        if table_format not in TABLE_FORMATS:
            raise ValueError(f"unknown table format '{table_format}', expected one of {TABLE_FORMATS}")
        self.out_dir = Path(out_dir)
        self.table_format = table_format
        self.svg = svg
        self.runtimes: Dict[str, float] = {}
        self.written: List[Path] = []

        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            logger.error(f"Cannot create output directory {self.out_dir}: {e}")
            raise

        logger.info(f"ReportStore initialized at {self.out_dir} (tables: {table_format})")

    def _path(self, command: str, name: str, suffix: str) -> Path:
        directory = self.out_dir / command
        directory.mkdir(parents=True, exist_ok=True)
        return directory / f"{name}.{suffix}"

    def _record(self, path: Path) -> Path:
        self.written.append(path)
        logger.debug(f"Wrote {path}")
        return path

    # ========== Tables and reports ==========

    def write_table(
        self,
        command: str,
        name: str,
        rows: Union[pd.DataFrame, Iterable[Mapping[str, Any]]],
        table_format: Optional[str] = None,
    ) -> Path:
        """
        Write tabular rows as CSV or JSON records.

        Args:
            command: Subdirectory (one per command)
            name: File stem
            rows: DataFrame or iterable of flat dicts
            table_format: Override of the store's default format

        Returns:
            Path of the written file
        """
        fmt = table_format or self.table_format
        frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame([to_jsonable(r) for r in rows])
        path = self._path(command, name, fmt)
        try:
            if fmt == "csv":
                frame.to_csv(path, index=False)
            else:
                path.write_text(json.dumps(to_jsonable(frame.to_dict(orient="records")), indent=2))
        except OSError as e:
            logger.error(f"Failed to write table {path}: {e}")
            raise
        return self._record(path)

    def write_json(self, command: str, name: str, data: Any) -> Path:
        path = self._path(command, name, "json")
        try:
            path.write_text(json.dumps(to_jsonable(data), indent=2))
        except OSError as e:
            logger.error(f"Failed to write report {path}: {e}")
            raise
        return self._record(path)

    def write_field(self, command: str, name: str, field, description: str = "") -> Path:
        """Binary scalar field plus JSON sidecar (see ScalarField.save)."""
        return self._record(field.save(self._path(command, name, "bin"), description))

    # ========== Plots ==========

    def write_scaling_svg(self, command: str, name: str, report) -> Optional[Path]:
        """
        Log-log plot of every fitted column of a scaling report against delta.

        Skipped (returns None) when the store was created with svg=False.
        """
        if not self.svg:
            return None
        deltas = report.column("delta")
        fig, ax = plt.subplots(figsize=(6, 4.5))
        try:
            for column, fit in report.fits.items():
                values = report.column(column)
                mask = np.isfinite(values) & (values > 0)
                points = ax.loglog(deltas[mask], values[mask], "o", label=f"{column} (slope {fit.slope:.3f})")
                xs = np.geomspace(deltas.min(), deltas.max(), 32)
                ax.loglog(xs, np.exp(fit.intercept) * xs**fit.slope, "-", color=points[0].get_color())
            ax.set_xlabel("delta")
            ax.set_title(report.name)
            ax.grid(True, which="both", alpha=0.3)
            ax.legend(fontsize="small")
            path = self._path(command, name, "svg")
            fig.savefig(path, format="svg")
        except OSError as e:
            logger.error(f"Failed to write plot for {report.name}: {e}")
            raise
        finally:
            plt.close(fig)
        return self._record(path)

    # ========== Manifest ==========

    def record_runtime(self, command: str, seconds: float) -> None:
        self.runtimes[command] = self.runtimes.get(command, 0.0) + float(seconds)

    def write_manifest(self, config, config_digest: str) -> Path:
        """manifest.json at the store root; rewritten after every command."""
        manifest = {
            "created_at": datetime.now(timezone.utc).isoformat(),
            "config_hash": config_digest,
            "config": config.to_dict(),
            "versions": library_versions(),
            "runtimes": self.runtimes,
            "seed": config.seed,
            "threads": config.threads,
            "files": [str(p.relative_to(self.out_dir)) for p in self.written],
        }
        path = self.out_dir / "manifest.json"
        try:
            path.write_text(json.dumps(to_jsonable(manifest), indent=2))
        except OSError as e:
            logger.error(f"Failed to write manifest {path}: {e}")
            raise
        logger.info(f"Manifest written to {path}")
        return path
