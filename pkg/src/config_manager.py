"""
Configuration management for netlist-fi.

Handles loading and parsing configuration from config.ini and environment variables.
"""

import os
import logging
import configparser
from pathlib import Path
from typing import Dict, Any, Optional, List, Tuple

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_FILE = "config.ini"
LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')


class ConfigError(Exception):
    """Exception raised for configuration errors."""
    pass


class ConfigManager:
    """
    Configuration manager for netlist-fi.

    Loads configuration from config.ini and environment variables,
    with environment variables taking precedence. A missing default
    config.ini is not an error; every key has a default.
    """

    def __init__(self, config_file: Optional[str] = None, load_env: bool = True):
        """
        Initialize configuration manager.

        Args:
            config_file: Path to configuration file (defaults to config.ini)
            load_env: Read a .env file into the environment first
        """
        self.explicit = config_file is not None
        self.config_file = config_file or DEFAULT_CONFIG_FILE
        self.config = configparser.ConfigParser()

        # Cell and pin names are case sensitive
        self.config.optionxform = str

        if load_env:
            load_dotenv()
        self._load_config()
        logger.debug("Configuration manager initialized")

    def _load_config(self) -> None:
        """Load configuration from file."""
        config_path = Path(self.config_file)

        if not config_path.exists():
            if self.explicit:
                raise ConfigError(f"Configuration file not found: {config_path}")
            logger.debug(f"No {config_path}; using defaults")
            return

        try:
            self.config.read(config_path)
            logger.info(f"Configuration loaded from {config_path}")
        except configparser.Error as e:
            raise ConfigError(f"Failed to load configuration: {e}")

    def _get_int(self, section: str, key: str, fallback: int, env: Optional[str] = None) -> int:
        raw = os.getenv(env) if env else None
        try:
            if raw:
                return int(raw)
            return self.config.getint(section, key, fallback=fallback)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be an integer, got {raw or self.config.get(section, key)!r}")

    def _get_float(self, section: str, key: str, fallback: float) -> float:
        try:
            return self.config.getfloat(section, key, fallback=fallback)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be a number, got {self.config.get(section, key)!r}")

    def _get_pin_entries(self, section: str, key: str) -> List[Tuple[str, str]]:
        """Parse a comma-separated list of CELL:PIN entries."""
        raw = self.config.get(section, key, fallback='')
        result: List[Tuple[str, str]] = []
        for entry in (part.strip() for part in raw.split(',')):
            if not entry:
                continue
            if ':' not in entry:
                raise ConfigError(f"[{section}] {key}: invalid entry '{entry}' (expected CELL:PIN)")
            cell, pin = (part.strip() for part in entry.split(':', 1))
            result.append((cell, pin))
        return result

    def _get_pin_map(self, section: str, key: str) -> Dict[str, str]:
        return dict(self._get_pin_entries(section, key))

    def _get_pin_lists(self, section: str, key: str) -> Dict[str, List[str]]:
        result: Dict[str, List[str]] = {}
        for cell, pin in self._get_pin_entries(section, key):
            result.setdefault(cell, []).append(pin)
        return result

    def get_solver_config(self) -> Dict[str, Any]:
        """
        Get solver configuration.

        Returns:
            Dictionary with backend, seed, max_conflicts and time_limit
        """
        return {
            'backend': os.getenv('NETLIST_FI_SOLVER') or self.config.get('solver', 'backend', fallback='internal'),
            'seed': self._get_int('solver', 'seed', 0, env='NETLIST_FI_SEED'),
            'max_conflicts': self._get_int('solver', 'max_conflicts', 0),
            'time_limit': self._get_float('solver', 'time_limit_seconds', 0.0),
        }

    def get_campaign_config(self) -> Dict[str, Any]:
        """
        Get campaign configuration.

        Returns:
            Dictionary with jobs, max_faults, chunk_size and verify_witnesses
        """
        try:
            verify = self.config.getboolean('campaign', 'verify_witnesses', fallback=True)
        except ValueError:
            raise ConfigError("[campaign] verify_witnesses must be a boolean")
        return {
            'jobs': self._get_int('campaign', 'jobs', 1, env='NETLIST_FI_JOBS'),
            'max_faults': self._get_int('campaign', 'max_faults', 0),
            'chunk_size': self._get_int('campaign', 'chunk_size', 16),
            'verify_witnesses': verify,
        }

    def get_oracle_config(self) -> Dict[str, Any]:
        return {'max_inputs': self._get_int('oracle', 'max_inputs', 20)}

    def get_library_config(self) -> Dict[str, Dict[str, Any]]:
        """
        Get cell library overrides.

        Returns:
            Dictionary with 'sequential_cells' and 'data_pins' maps of cell name to
            data pin, and 'inverted_outputs' mapping cell name to its inverting outputs
        """
        return {
            'sequential_cells': self._get_pin_map('library', 'sequential_cells'),
            'data_pins': self._get_pin_map('library', 'data_pins'),
            'inverted_outputs': self._get_pin_lists('library', 'inverted_outputs'),
        }

    def get_logging_config(self) -> Dict[str, Any]:
        """
        Get logging configuration.

        Returns:
            Dictionary with logging settings
        """
        level = os.getenv('NETLIST_FI_LOG_LEVEL') or self.config.get('logging', 'log_level', fallback='INFO')
        return {
            'log_level': level.upper(),
            'log_file': self.config.get('logging', 'log_file', fallback='logs/netlist_fi.log'),
        }

    def validate_configuration(self) -> Dict[str, Any]:
        """
        Validate configuration completeness.

        Returns:
            Dictionary with validation results
        """
        results: Dict[str, Any] = {
            'valid': True,
            'errors': [],
            'warnings': []
        }
        errors: List[str] = results['errors']
        warnings: List[str] = results['warnings']

        try:
            solver = self.get_solver_config()
            backend = solver['backend']
            if backend != 'internal' and not backend.startswith('external:'):
                errors.append(f"Unknown solver backend '{backend}'")
            elif backend.startswith('external:') and not Path(backend.split(':', 1)[1]).exists():
                warnings.append(f"External solver {backend.split(':', 1)[1]} not found")
            if solver['max_conflicts'] < 0 or solver['time_limit'] < 0:
                errors.append("Solver limits must not be negative")
        except ConfigError as e:
            errors.append(f"Solver: {e}")

        try:
            campaign = self.get_campaign_config()
            if campaign['jobs'] < 1:
                errors.append("Campaign jobs must be at least 1")
            if campaign['chunk_size'] < 1:
                errors.append("Campaign chunk_size must be at least 1")
            if campaign['max_faults'] < 0:
                errors.append("Campaign max_faults must not be negative")
            cpus = os.cpu_count() or 1
            if campaign['jobs'] > cpus:
                warnings.append(f"{campaign['jobs']} jobs requested on {cpus} CPU(s)")
            if not campaign['verify_witnesses']:
                warnings.append("Witness verification is disabled")
        except ConfigError as e:
            errors.append(f"Campaign: {e}")

        try:
            max_inputs = self.get_oracle_config()['max_inputs']
            if max_inputs < 0:
                errors.append("Oracle max_inputs must not be negative")
            elif max_inputs > 24:
                warnings.append("Oracle bound above 24 inputs is very slow")
        except ConfigError as e:
            errors.append(f"Oracle: {e}")

        try:
            self.get_library_config()
        except ConfigError as e:
            errors.append(f"Library: {e}")

        if self.get_logging_config()['log_level'] not in LOG_LEVELS:
            errors.append(f"Unknown log level '{self.get_logging_config()['log_level']}'")

        results['valid'] = not errors
        return results

    def get_all_config(self) -> Dict[str, Any]:
        """
        Get complete configuration for debugging.

        Returns:
            Dictionary with all configuration sections
        """
        return {section: dict(self.config.items(section)) for section in self.config.sections()}
