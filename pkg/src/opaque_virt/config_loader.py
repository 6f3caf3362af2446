"""Loader for the optional ``--config`` file of CLI subcommands."""

import json
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ValidationFailure
from .models import CircuitBreakerConfig, RetryConfig


class ConfigurationError(ValidationFailure):
    """Raised when configuration loading fails."""
    pass


class CommandConfig(BaseModel):
    """Validated content of a configuration file.

    ``flags`` holds values for long CLI flags keyed by their argparse
    destination (dashes replaced by underscores). ``retry`` and
    ``circuit_breaker`` are nested sections used by the recording proxy.
    """
    model_config = ConfigDict(frozen=True)

    flags: Dict[str, Any] = Field(default_factory=dict)
    retry: Optional[RetryConfig] = None
    circuit_breaker: Optional[CircuitBreakerConfig] = None


_SECTIONS = ("retry", "circuit_breaker")


class ConfigLoader:
    """Loads and validates configuration files whose keys mirror CLI flags."""

    @staticmethod
    def load_from_file(file_path: Union[str, Path], allowed_flags: Iterable[str]) -> CommandConfig:
        """Load a configuration file.

        Args:
            file_path: Path to the configuration file (YAML or JSON)
            allowed_flags: Flag destinations accepted by the subcommand

        Returns:
            CommandConfig: Validated configuration

        Raises:
            ConfigurationError: If loading or validation fails
        """
        file_path = Path(file_path)

        if not file_path.exists():
            raise ConfigurationError(f"Configuration file not found: {file_path}")

        try:
            with open(file_path, "r", encoding="utf-8") as f:
                if file_path.suffix.lower() in [".yaml", ".yml"]:
                    config_data = yaml.safe_load(f)
                elif file_path.suffix.lower() == ".json":
                    config_data = json.load(f)
                else:
                    raise ConfigurationError(f"Unsupported file format: {file_path.suffix}")
        except (yaml.YAMLError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"Failed to parse configuration file: {e}")
        except OSError as e:
            raise ConfigurationError(f"Failed to read configuration file: {e}")

        return ConfigLoader.load_from_dict(config_data, allowed_flags)

    @staticmethod
    def load_from_dict(config_data: Any, allowed_flags: Iterable[str]) -> CommandConfig:
        """Validate configuration data.

        Raises:
            ConfigurationError: On a non-mapping, unknown keys or invalid sections
        """
        if config_data is None:
            config_data = {}
        if not isinstance(config_data, dict):
            raise ConfigurationError("Configuration must be a mapping of flag names to values")

        allowed = set(allowed_flags)
        flags: Dict[str, Any] = {}
        sections: Dict[str, Any] = {}
        unknown = []
        for key, value in config_data.items():
            name = ConfigLoader.normalize_key(key)
            if name in _SECTIONS:
                sections[name] = value
            elif name in allowed:
                if name in flags:
                    raise ConfigurationError(f"Duplicate configuration key: {key}")
                flags[name] = value
            else:
                unknown.append(str(key))
        if unknown:
            raise ConfigurationError(f"Unknown configuration key(s): {', '.join(sorted(unknown))}")

        for name, value in flags.items():
            if isinstance(value, dict):
                raise ConfigurationError(f"Configuration key '{name}' must not be a mapping")

        try:
            return CommandConfig(flags=flags, **sections)
        except ValidationError as e:
            raise ConfigurationError(f"Configuration validation failed: {e}")

    @staticmethod
    def normalize_key(key: Any) -> str:
        """``--timeout-ms`` / ``timeout-ms`` / ``timeout_ms`` -> ``timeout_ms``."""
        return str(key).lstrip("-").replace("-", "_")
