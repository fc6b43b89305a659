"""
Tests for configuration loading and validation.
"""

import pytest

from src.config_manager import ConfigError, ConfigManager

ENV_KEYS = ('NETLIST_FI_SOLVER', 'NETLIST_FI_SEED', 'NETLIST_FI_JOBS', 'NETLIST_FI_LOG_LEVEL')


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for key in ENV_KEYS:
        monkeypatch.delenv(key, raising=False)


def write_config(tmp_path, text: str) -> str:
    path = tmp_path / "config.ini"
    path.write_text(text)
    return str(path)


class TestLoading:
    """Test file and environment precedence."""

    def test_defaults_without_file(self, tmp_path, monkeypatch):
        """Test a missing default config.ini falls back to defaults."""
        monkeypatch.chdir(tmp_path)
        config = ConfigManager(load_env=False)
        assert config.get_solver_config() == {'backend': 'internal', 'seed': 0,
                                              'max_conflicts': 0, 'time_limit': 0.0}
        assert config.get_campaign_config()['jobs'] == 1
        assert config.get_oracle_config() == {'max_inputs': 20}
        assert config.get_logging_config()['log_file'] == 'logs/netlist_fi.log'

    def test_explicit_missing_file(self, tmp_path):
        """Test an explicitly named file must exist."""
        with pytest.raises(ConfigError):
            ConfigManager(str(tmp_path / "nope.ini"), load_env=False)

    def test_file_values(self, tmp_path):
        """Test values from the file."""
        config = ConfigManager(write_config(tmp_path, """
[solver]
backend = external:/usr/bin/kissat
max_conflicts = 5000
time_limit_seconds = 2.5

[campaign]
jobs = 4
verify_witnesses = false
"""), load_env=False)
        solver = config.get_solver_config()
        assert solver['backend'] == 'external:/usr/bin/kissat'
        assert solver['max_conflicts'] == 5000
        assert solver['time_limit'] == 2.5
        assert config.get_campaign_config()['verify_witnesses'] is False

    def test_environment_wins(self, tmp_path, monkeypatch):
        """Test environment variables override the file."""
        monkeypatch.setenv('NETLIST_FI_JOBS', '6')
        monkeypatch.setenv('NETLIST_FI_LOG_LEVEL', 'debug')
        config = ConfigManager(write_config(tmp_path, "[campaign]\njobs = 2\n"), load_env=False)
        assert config.get_campaign_config()['jobs'] == 6
        assert config.get_logging_config()['log_level'] == 'DEBUG'

    def test_pin_maps_are_case_sensitive(self, tmp_path):
        """Test CELL:PIN lists keep cell name case."""
        config = ConfigManager(write_config(tmp_path, """
[library]
sequential_cells = REG_X1:D, Latch_X1 : G
"""), load_env=False)
        assert config.get_library_config()['sequential_cells'] == {'REG_X1': 'D', 'Latch_X1': 'G'}

    def test_inverted_outputs_collect_pins_per_cell(self, tmp_path):
        """Test repeated cells in inverted_outputs gather their pins in order."""
        config = ConfigManager(write_config(tmp_path, """
[library]
inverted_outputs = SREG:QB, SREG:QB2, LAT:XN
"""), load_env=False)
        assert config.get_library_config()['inverted_outputs'] == {'SREG': ['QB', 'QB2'], 'LAT': ['XN']}

    def test_invalid_pin_map(self, tmp_path):
        """Test an entry without a colon is rejected."""
        config = ConfigManager(write_config(tmp_path, "[library]\ndata_pins = SDFF\n"), load_env=False)
        with pytest.raises(ConfigError):
            config.get_library_config()

    def test_invalid_integer(self, tmp_path):
        """Test non-integer values raise ConfigError."""
        config = ConfigManager(write_config(tmp_path, "[campaign]\njobs = many\n"), load_env=False)
        with pytest.raises(ConfigError):
            config.get_campaign_config()


class TestValidation:
    """Test validate_configuration."""

    def test_valid_defaults(self, tmp_path, monkeypatch):
        """Test the defaults validate."""
        monkeypatch.chdir(tmp_path)
        results = ConfigManager(load_env=False).validate_configuration()
        assert results['valid']
        assert results['errors'] == []

    def test_collects_errors(self, tmp_path):
        """Test several problems are reported together."""
        config = ConfigManager(write_config(tmp_path, """
[solver]
backend = picosat

[campaign]
jobs = 0

[logging]
log_level = LOUD
"""), load_env=False)
        results = config.validate_configuration()
        assert not results['valid']
        assert len(results['errors']) == 3

    def test_warnings(self, tmp_path):
        """Test a missing external solver and disabled verification are warnings."""
        config = ConfigManager(write_config(tmp_path, """
[solver]
backend = external:/nonexistent/solver

[campaign]
verify_witnesses = no
"""), load_env=False)
        results = config.validate_configuration()
        assert results['valid']
        assert any("not found" in warning for warning in results['warnings'])
        assert any("verification" in warning for warning in results['warnings'])
