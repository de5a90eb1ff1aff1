"""
Unit tests for experiment file loading and overrides.
"""

from pathlib import Path

import pytest

from hypbq.exceptions import ConfigurationError
from hypbq.services.experiment_config import (
    ExperimentLoader,
    apply_overrides,
    parse_override,
    validate_experiment,
)

CONFIG_DIR = Path(__file__).resolve().parents[2] / "config"


class TestParseOverride:
    """Test suite for parse_override."""

    @pytest.mark.parametrize("item, expected", [
        ("solver.rho=0.05", ("solver.rho", 0.05)),
        ("manifold.n_tau=32", ("manifold.n_tau", 32)),
        ("solver.endpoint_rule=trapezoid", ("solver.endpoint_rule", "trapezoid")),
        ('solver.endpoint_rule="graded"', ("solver.endpoint_rule", "graded")),
        ("experiment.period = 2.5", ("experiment.period", 2.5)),
    ])
    def test_values(self, item, expected):
        """Test TOML literals are typed and bare words stay strings."""
        assert parse_override(item) == expected

    @pytest.mark.parametrize("item", ["solver.rho", "=0.1"])
    def test_malformed(self, item):
        """Test missing '=' or key raises OVERRIDE_MALFORMED."""
        with pytest.raises(ConfigurationError) as exc_info:
            parse_override(item)

        assert exc_info.value.error_code == "OVERRIDE_MALFORMED"


class TestApplyOverrides:
    """Test suite for apply_overrides."""

    def test_nested_merge_copies_tables(self):
        """Test dotted keys create and update nested tables without mutating the input."""
        data = {"solver": {"rho": 0.1, "p": 4.0}}

        merged = apply_overrides(data, ["solver.rho=0.05", "forcing.h.amplitude=1e-3"])

        assert merged["solver"] == {"rho": 0.05, "p": 4.0}
        assert merged["forcing"]["h"]["amplitude"] == 1e-3
        assert data == {"solver": {"rho": 0.1, "p": 4.0}}

    def test_descend_into_value(self):
        """Test overriding below a scalar raises OVERRIDE_MALFORMED."""
        with pytest.raises(ConfigurationError) as exc_info:
            apply_overrides({"solver": {"rho": 0.1}}, ["solver.rho.x=1"])

        assert exc_info.value.error_code == "OVERRIDE_MALFORMED"


class TestValidateExperiment:
    """Test suite for validate_experiment."""

    def test_defaults(self):
        """Test an empty document validates to the defaults."""
        config = validate_experiment({})

        assert config.manifold.d == 2
        assert config.semigroup.spectral_constant(2) == 0.25

    def test_unknown_key_named(self):
        """Test a misspelled key is reported by its dotted path."""
        with pytest.raises(ConfigurationError) as exc_info:
            validate_experiment({"solver": {"rhoo": 0.1}})

        assert exc_info.value.error_code == "CONFIG_INVALID"
        assert exc_info.value.details["key"] == "solver.rhoo"

    def test_cross_section_rule(self):
        """Test p <= d is refused."""
        with pytest.raises(ConfigurationError):
            validate_experiment({"solver": {"p": 2.0}})

    def test_d3_needs_radial_grid(self):
        """Test d = 3 with angular nodes is refused."""
        with pytest.raises(ConfigurationError):
            validate_experiment({"manifold": {"d": 3, "n_omega": 8}})


class TestExperimentLoader:
    """Test suite for ExperimentLoader."""

    @pytest.mark.parametrize("name", ["small-data.toml", "zero-forcing.toml", "periodic.toml"])
    def test_shipped_configs_validate(self, name):
        """Test every shipped experiment file loads."""
        config = ExperimentLoader(str(CONFIG_DIR / name)).load()

        assert config.solver.p > config.manifold.d

    def test_override_applied(self):
        """Test overrides win over file values."""
        config = ExperimentLoader(str(CONFIG_DIR / "small-data.toml")).load(["solver.rho=0.05"])

        assert config.solver.rho == 0.05

    def test_no_file_gives_defaults(self):
        """Test a loader without a path validates overrides alone."""
        config = ExperimentLoader().load(["manifold.n_tau=32"])

        assert config.manifold.n_tau == 32

    def test_missing_file(self, tmp_path):
        """Test a missing file raises CONFIG_NOT_FOUND."""
        with pytest.raises(ConfigurationError) as exc_info:
            ExperimentLoader(str(tmp_path / "absent.toml")).load()

        assert exc_info.value.error_code == "CONFIG_NOT_FOUND"

    def test_bad_toml(self, tmp_path):
        """Test a syntax error raises CONFIG_SYNTAX."""
        path = tmp_path / "broken.toml"
        path.write_text("[solver\nrho = 0.1\n", encoding="utf-8")

        with pytest.raises(ConfigurationError) as exc_info:
            ExperimentLoader(str(path)).load()

        assert exc_info.value.error_code == "CONFIG_SYNTAX"
