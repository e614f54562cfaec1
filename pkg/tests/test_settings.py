"""
Tests for the YAML/env settings layer
"""

import pytest
import yaml

from config.settings import Settings
from safety.guards import ConfigError


def write_settings(tmp_path, data):
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return str(path)


def test_defaults_without_file(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    settings = Settings()
    assert settings.config_path is None
    assert settings.runtime.workers == 1
    assert settings.runtime.default_seed == 20220601
    assert settings.logging.enable_file is False
    assert settings.validate_config() == []


def test_yaml_sections_are_loaded(tmp_path):
    path = write_settings(tmp_path, {
        "logging": {"level": "DEBUG", "enable_console": False},
        "runtime": {"workers": 3, "output_directory": "out"},
    })
    settings = Settings(path)
    assert settings.log_level == "DEBUG"
    assert settings.logging.enable_console is False
    assert settings.runtime.workers == 3
    assert settings.runtime.output_directory == "out"


def test_env_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("PRIVTS_WORKERS", "4")
    monkeypatch.setenv("PRIVTS_SEED", "7")
    monkeypatch.setenv("PRIVTS_LOG_TO_FILE", "yes")
    monkeypatch.setenv("PRIVTS_DEBUG", "true")
    settings = Settings(write_settings(tmp_path, {"runtime": {"workers": 2}}))
    assert settings.runtime.workers == 4
    assert settings.runtime.default_seed == 7
    assert settings.logging.enable_file is True
    assert settings.debug is True


def test_bad_env_value_is_ignored(tmp_path, monkeypatch):
    monkeypatch.setenv("PRIVTS_WORKERS", "many")
    settings = Settings(write_settings(tmp_path, {}))
    assert settings.runtime.workers == 1


def test_validation_errors(tmp_path):
    settings = Settings(write_settings(tmp_path, {
        "logging": {"level": "LOUD"},
        "runtime": {"workers": 0, "test_fraction": 1.5},
    }))
    errors = settings.validate_config()
    assert len(errors) == 3
    assert any("worker" in e for e in errors)


def test_summary(tmp_path):
    summary = Settings(write_settings(tmp_path, {})).get_config_summary()
    assert summary["logging"]["file"] is None
    assert set(summary["runtime"]) == {"workers", "output_directory", "default_seed", "test_fraction"}


def test_broken_yaml_is_reported(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("logging:\n  level: [INFO\n", encoding="utf-8")
    with pytest.raises(ConfigError) as excinfo:
        Settings(str(path))
    assert excinfo.value.context["path"] == str(path)


def test_wrongly_typed_section_is_reported(tmp_path):
    with pytest.raises(ConfigError):
        Settings(write_settings(tmp_path, {"runtime": {"workers": "several"}}))
    with pytest.raises(ConfigError):
        Settings(write_settings(tmp_path, {"runtime": ["workers", 2]}))


def test_non_mapping_file_is_reported(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("- logging\n- runtime\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        Settings(str(path))


def test_absent_file_falls_back_to_defaults(tmp_path):
    settings = Settings(str(tmp_path / "absent.yaml"))
    assert settings.runtime.workers == 1
