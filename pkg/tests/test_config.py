"""
Configuration Test Suite

Test Coverage:
- Defaults and TOML loading
- Validation errors naming the offending field
- Overrides from command-line options
- Configuration hashing
"""

import pytest

from nikodym_lab.config import ExperimentConfig, Tolerances, config_from_mapping, config_hash, load_config
from nikodym_lab.errors import ConfigError

TOML = """
metric = "space_form"
metric_params = [-1.0]
deltas = [0.125, 0.0625, 0.03125]
alpha = 1.0
seed = 11

[regions]
square = ["abs(x1) <= 1", "abs(x2) <= 1", "abs(x3) <= 0.01"]
line = "abs(x2) <= 0"

[tolerances]
fermi_residual = 2e-5

[commands.fold-check]
trials = 50
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "lab.toml"
    path.write_text(TOML)
    return path


class TestLoading:
    """Tests for defaults and TOML files."""

    def test_defaults(self):
        """Test the default metric, delta ladder and output settings."""
        config = load_config(None)
        assert config.metric == "sogge_example"
        assert config.deltas == [0.125, 0.0625, 0.03125, 0.015625, 0.0078125]
        assert config.format == "csv"
        assert config.threads == 1

    def test_load_file(self, config_file):
        """Test that every section of the file is applied."""
        config = load_config(config_file)
        assert config.metric_name == "space_form"
        assert config.build_metric().params == {"K": -1.0}
        assert config.seed == 11
        assert config.regions["line"] == ["abs(x2) <= 0"]
        assert config.tolerances.fermi_residual == 2e-5
        assert config.tolerances.energy_drift == Tolerances().energy_drift
        assert config.command_options("fold-check") == {"trials": 50}
        assert config.command_options("boxdim") == {}

    def test_metric_table_with_name(self):
        """Test [metric] name = ..., params = [...]."""
        config = config_from_mapping({"metric": {"name": "ms_perturbation", "params": [0.25]}})
        assert config.metric == "ms_perturbation"
        assert config.metric_params == [0.25]

    def test_expression_metric(self):
        """Test a metric given as g_jk expressions with a domain half width."""
        config = config_from_mapping({"metric": {"g11": "1 + x2^2", "half_width": 0.5}})
        assert config.metric_name == "custom"
        m = config.build_metric()
        assert m.domain.upper[0] == pytest.approx(0.5)

    def test_unknown_key_is_ignored(self, caplog):
        """Test that unknown top-level keys are logged, not fatal."""
        config = config_from_mapping({"colour": "blue"})
        assert config.metric == "sogge_example"
        assert "colour" in caplog.text

    def test_missing_file(self, tmp_path):
        """Test that an unreadable path is a config error."""
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.toml")

    def test_invalid_toml(self, tmp_path):
        """Test that a TOML syntax error is a config error."""
        path = tmp_path / "bad.toml"
        path.write_text("deltas = [0.1,")
        with pytest.raises(ConfigError):
            load_config(path)


class TestValidation:
    """Tests for configuration invariants."""

    @pytest.mark.parametrize(
        "values,field",
        [
            ({"deltas": []}, "deltas"),
            ({"deltas": [0.05, 0.1, 0.2]}, "deltas"),
            ({"deltas": [0.3, 0.1, 0.05]}, "deltas"),
            ({"alpha": 1.5}, "alpha"),
            ({"grid_factor": 0.5}, "grid_factor"),
            ({"lam": 0.0}, "lam"),
            ({"format": "xml"}, "format"),
            ({"threads": 0}, "threads"),
            ({"metric": "torus"}, "metric"),
            ({"regions": {"empty": []}}, "regions.empty"),
        ],
    )
    def test_invalid_field(self, values, field):
        """Test that each invariant violation names its field."""
        with pytest.raises(ConfigError) as info:
            ExperimentConfig(**values)
        assert info.value.field == field

    def test_bad_tolerance(self):
        """Test unknown and non-positive tolerances."""
        with pytest.raises(ConfigError):
            Tolerances.from_mapping({"warp": 1.0})
        with pytest.raises(ConfigError):
            Tolerances.from_mapping({"energy_drift": -1.0})


class TestOverrides:
    """Tests for command-line overrides and hashing."""

    def test_none_values_are_ignored(self):
        """Test that unset options keep the file values."""
        config = ExperimentConfig(seed=3).with_overrides(seed=None, threads=4)
        assert config.seed == 3
        assert config.threads == 4

    def test_metric_override_clears_params(self, config_file):
        """Test that switching metric drops the previous metric's parameters."""
        config = load_config(config_file).with_overrides(metric="sogge_example")
        assert config.metric_params == []

    def test_override_is_validated(self):
        """Test that overrides go through validation."""
        with pytest.raises(ConfigError):
            ExperimentConfig().with_overrides(deltas=[0.5])

    def test_hash_is_stable(self, config_file):
        """Test that equal configs hash equally and any change alters the hash."""
        first = load_config(config_file)
        second = load_config(config_file)
        assert config_hash(first) == config_hash(second)
        assert len(config_hash(first)) == 64
        assert config_hash(first.with_overrides(seed=12)) != config_hash(first)
