"""
Unit tests for configuration module.
"""

import pytest
from pathlib import Path
import sys

sys.path.append(str(Path(__file__).parent.parent / "src"))

from feedcap import config


def test_validate_config():
    """Test default configuration is valid."""
    assert config.validate_config() is True


def test_get_config_sections():
    """Test known sections are returned and unknown ones are empty."""
    assert config.get_config("numerics")["tau_circ"] == 1e-9
    assert config.get_config("optimizer")["bracket"] == (1e-4, 20.0)
    assert config.get_config("simulation")["epsilon"] == 0.2
    assert config.get_config("missing") == {}


def test_invalid_epsilon_rejected(monkeypatch):
    """Test out-of-range epsilon fails validation."""
    monkeypatch.setitem(config.SIMULATION_CONFIG, "epsilon", 1.5)
    with pytest.raises(ValueError):
        config.validate_config()


def test_bundled_channel_file_exists():
    """Test the worked-example channel ships with the package."""
    assert Path(config.EXAMPLE_CONFIG["channel_file"]).exists()


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
