"""
Configuration management for the privileged time-series harness
"""

import os
import logging
from typing import Optional, Dict, Any, List

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError

from safety.guards import ConfigError


class LoggingSettings(BaseModel):
    """Logging configuration."""
    level: str = Field(default="INFO", description="Log level")
    file_path: str = Field(default="logs/privileged-ts.log", description="Log file path")
    max_file_size: int = Field(default=10485760, description="Max log file size in bytes")
    backup_count: int = Field(default=5, description="Number of backup log files")
    enable_console: bool = Field(default=True, description="Enable console logging")
    enable_file: bool = Field(default=False, description="Enable file logging")


class RuntimeSettings(BaseModel):
    """Defaults applied to experiment and ingest runs."""
    workers: int = Field(default=1, description="Worker threads for replicate cells")
    output_directory: str = Field(default="results", description="Directory for result files")
    default_seed: int = Field(default=20220601, description="Master seed when none is given")
    test_fraction: float = Field(default=0.2, description="Held-out share of an ingested CSV")


class Settings:
    """Main configuration manager."""

    def __init__(self, config_path: Optional[str] = None):
        load_dotenv()
        self.config_path = config_path or self._find_config_file()
        self.logger = logging.getLogger(__name__)

        self.logging = LoggingSettings()
        self.runtime = RuntimeSettings()

        self._load_config()
        self._apply_env_overrides()

        self.log_level = self.logging.level
        self.log_file = self.logging.file_path
        self.debug = os.getenv('PRIVTS_DEBUG', 'false').lower() == 'true'

    def _find_config_file(self) -> Optional[str]:
        """Find configuration file in standard locations."""
        possible_paths = [
            "config.yaml",
            "config/config.yaml",
            os.path.expanduser("~/.config/privileged-ts/config.yaml"),
        ]

        for path in possible_paths:
            if os.path.exists(path):
                return path

        return None

    def _load_config(self) -> None:
        """Load configuration from YAML file."""
        if not self.config_path:
            self.logger.info("No configuration file found, using defaults")
            return

        try:
            with open(self.config_path, 'r', encoding='utf-8') as f:
                config_data = yaml.safe_load(f)
        except FileNotFoundError:
            self.logger.info(f"Configuration file {self.config_path} not found, using defaults")
            return
        except yaml.YAMLError as e:
            raise ConfigError(f"could not parse settings file {self.config_path}: {e}",
                              path=self.config_path) from e

        if not config_data:
            return
        if not isinstance(config_data, dict):
            raise ConfigError(f"settings file {self.config_path} must hold a mapping", path=self.config_path)

        try:
            if 'logging' in config_data:
                self.logging = LoggingSettings(**config_data['logging'])

            if 'runtime' in config_data:
                self.runtime = RuntimeSettings(**config_data['runtime'])
        except (ValidationError, TypeError) as e:
            raise ConfigError(f"invalid settings in {self.config_path}: {e}", path=self.config_path) from e

        self.logger.info(f"Configuration loaded from {self.config_path}")

    def _apply_env_overrides(self) -> None:
        """Apply environment variable overrides."""
        env_mappings = {
            "PRIVTS_LOG_LEVEL": ("logging", "level", str),
            "PRIVTS_LOG_FILE": ("logging", "file_path", str),
            "PRIVTS_LOG_TO_FILE": ("logging", "enable_file", bool),

            "PRIVTS_WORKERS": ("runtime", "workers", int),
            "PRIVTS_OUTPUT_DIR": ("runtime", "output_directory", str),
            "PRIVTS_SEED": ("runtime", "default_seed", int),
        }

        for env_var, (section, key, type_func) in env_mappings.items():
            value = os.getenv(env_var)
            if value is not None:
                try:
                    if type_func == bool:
                        converted_value = value.lower() in ('true', '1', 'yes', 'on')
                    else:
                        converted_value = type_func(value)

                    section_obj = getattr(self, section)
                    setattr(section_obj, key, converted_value)

                    self.logger.debug(f"Environment override: {env_var} = {converted_value}")

                except (ValueError, TypeError) as e:
                    self.logger.warning(f"Invalid environment variable {env_var}: {e}")

    def validate_config(self) -> List[str]:
        """Validate configuration settings and return any errors."""
        errors = []

        if self.runtime.workers < 1:
            errors.append(f"Invalid worker count: {self.runtime.workers}")

        if not 0 <= self.runtime.default_seed < 2**64:
            errors.append(f"Default seed does not fit in 64 bits: {self.runtime.default_seed}")

        if not (0.0 < self.runtime.test_fraction < 1.0):
            errors.append(f"Invalid test fraction: {self.runtime.test_fraction}")

        valid_log_levels = ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']
        if self.logging.level.upper() not in valid_log_levels:
            errors.append(f"Invalid log level: {self.logging.level}")

        return errors

    def get_config_summary(self) -> Dict[str, Any]:
        """Get a summary of current configuration."""
        return {
            "config_file": self.config_path,
            "logging": {
                "level": self.logging.level,
                "file": self.logging.file_path if self.logging.enable_file else None
            },
            "runtime": {
                "workers": self.runtime.workers,
                "output_directory": self.runtime.output_directory,
                "default_seed": self.runtime.default_seed,
                "test_fraction": self.runtime.test_fraction
            }
        }
