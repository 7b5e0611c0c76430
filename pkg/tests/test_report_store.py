"""
Report Store Test Suite

Test Coverage:
- JSON conversion of numpy values
- CSV and JSON tables, JSON reports and binary fields
- Manifest contents
- SVG plots on request only
"""

import json
import math

import numpy as np
import pandas as pd
import pytest

from nikodym_lab.config import ExperimentConfig, config_hash
from nikodym_lab.experiments.scaling import ScalingReport
from nikodym_lab.geometry.metric import Box
from nikodym_lab.maximal.grid import ScalarField
from nikodym_lab.persistence import ReportStore, library_versions, to_jsonable

ROWS = [{"delta": 0.125, "volume": 0.5}, {"delta": 0.0625, "volume": 0.25}]


@pytest.fixture
def store(tmp_path):
    return ReportStore(tmp_path / "results")


def _report():
    report = ScalingReport("volume", expected={"volume": 1.0})
    for delta in (0.125, 0.0625, 0.03125):
        report.add_row(delta, volume=4 * delta)
    report.fit()
    return report


class TestJsonable:
    """Tests for numpy to JSON conversion."""

    def test_numpy_values(self):
        """Test arrays, numpy scalars and non-finite floats."""
        data = {"a": np.arange(3), "b": np.float64(0.5), "c": np.bool_(True), "d": math.inf, 1: np.int64(2)}
        assert to_jsonable(data) == {"a": [0, 1, 2], "b": 0.5, "c": True, "d": None, "1": 2}

    def test_objects_with_to_dict(self):
        """Test that report objects serialize through to_dict."""
        assert to_jsonable(_report())["name"] == "volume"

    def test_versions(self):
        """Test that the version table names the package and its libraries."""
        versions = library_versions()
        assert {"nikodym_lab", "python", "numpy", "scipy"} <= set(versions)


class TestTables:
    """Tests for tables and reports."""

    def test_csv_table(self, store):
        """Test a CSV table under the command directory."""
        path = store.write_table("boxdim", "scaling", ROWS)
        assert path == store.out_dir / "boxdim" / "scaling.csv"
        assert pd.read_csv(path).to_dict(orient="records") == ROWS

    def test_json_table(self, store):
        """Test the per-call JSON override."""
        path = store.write_table("boxdim", "scaling", pd.DataFrame(ROWS), table_format="json")
        assert json.loads(path.read_text()) == ROWS

    def test_unknown_format(self, tmp_path):
        """Test that an unknown table format is refused."""
        with pytest.raises(ValueError):
            ReportStore(tmp_path, table_format="xlsx")

    def test_json_report(self, store):
        """Test that a report with numpy content is written as JSON."""
        path = store.write_json("fold-check", "report", {"ratios": np.array([1.0, 0.9])})
        assert json.loads(path.read_text()) == {"ratios": [1.0, 0.9]}

    def test_field(self, store):
        """Test that a scalar field is written with its sidecar."""
        field = ScalarField.constant(Box.cube(0.5), 0.25)
        path = store.write_field("discrete-bound", "E", field, "unit set")
        assert path.exists()
        assert ScalarField.load(path).shape == field.shape


class TestManifest:
    """Tests for manifest.json."""

    def test_manifest_keys(self, store):
        """Test the manifest records config, hash, runtimes and files."""
        config = ExperimentConfig(seed=5, threads=2)
        store.write_table("boxdim", "scaling", ROWS)
        store.record_runtime("boxdim", 1.5)
        store.record_runtime("boxdim", 0.5)
        manifest = json.loads(store.write_manifest(config, config_hash(config)).read_text())
        assert set(manifest) == {"created_at", "config_hash", "config", "versions", "runtimes", "seed", "threads", "files"}
        assert manifest["config_hash"] == config_hash(config)
        assert manifest["runtimes"] == {"boxdim": 2.0}
        assert manifest["seed"] == 5
        assert manifest["threads"] == 2
        assert manifest["files"] == ["boxdim/scaling.csv"]


class TestPlots:
    """Tests for scaling plots."""

    def test_svg_skipped_by_default(self, store):
        """Test that no plot is written unless svg was requested."""
        assert store.write_scaling_svg("boxdim", "scaling", _report()) is None
        assert not (store.out_dir / "boxdim").exists()

    def test_svg_written(self, tmp_path):
        """Test an SVG plot when requested."""
        store = ReportStore(tmp_path, svg=True)
        path = store.write_scaling_svg("boxdim", "scaling", _report())
        assert path.suffix == ".svg"
        assert path.read_text().lstrip().startswith("<?xml")
