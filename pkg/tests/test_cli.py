"""
Tests for the command-line front end.
"""

import argparse

import pytest
import pandas as pd
from pathlib import Path
import sys

sys.path.append(str(Path(__file__).parent.parent / "src"))

from feedcap import cli
from feedcap.config import LOGGING_CONFIG
from feedcap.utils import export_to_json, load_from_json


@pytest.fixture
def log_file(tmp_path, monkeypatch):
    """Keep CLI logs inside the test directory."""
    monkeypatch.setitem(LOGGING_CONFIG, "file", str(tmp_path / "cli.log"))


def test_parse_power_grid():
    """Test range and list grids."""
    assert cli.parse_power_grid("-5:20:5") == [-5.0, 0.0, 5.0, 10.0, 15.0, 20.0]
    assert cli.parse_power_grid("0,3") == [0.0, 3.0]
    with pytest.raises(argparse.ArgumentTypeError):
        cli.parse_power_grid("")
    with pytest.raises(argparse.ArgumentTypeError):
        cli.parse_power_grid("1:2:0")


def test_usage_errors(log_file, tmp_path):
    """Test bad arguments exit with code 1."""
    assert cli.main(["design", "--channel", "awgn", "--rate", "0", "--out", str(tmp_path)]) == 1
    assert cli.main(["design", "--channel", "awgn", "--out", str(tmp_path)]) == 1
    assert cli.main(["design", "--rate", "1", "--power", "1"]) == 1


def test_design_rate(log_file, tmp_path):
    """Test the memoryless channel at one bit needs power 3."""
    assert cli.main(["design", "--channel", "awgn", "--rate", "1", "--out", str(tmp_path)]) == 0
    design = load_from_json(tmp_path / "design.json")
    assert design["power"] == pytest.approx(3.0, rel=1e-9)
    assert design["n_star"] == 0


def test_design_power(log_file, tmp_path):
    """Test the memoryless channel at power 3 carries one bit."""
    assert cli.main(["design", "--channel", "awgn", "--power", "3", "--out", str(tmp_path)]) == 0
    assert load_from_json(tmp_path / "design.json")["rate"] == pytest.approx(1.0, abs=1e-6)


def test_invalid_channel_file(log_file, tmp_path):
    """Test an unstable channel file exits with code 2."""
    path = export_to_json({"kind": "rational", "num": [1.0], "den": [1.0, -1.5]}, tmp_path / "bad.json")
    assert cli.main(["design", "--channel", str(path), "--rate", "1", "--out", str(tmp_path)]) == 2


def test_capacity_curve(log_file, tmp_path):
    """Test a one-point curve on the memoryless channel."""
    code = cli.main(["capacity-curve", "--channel", "awgn", "--power-grid", "0", "--out", str(tmp_path)])
    assert code == 0
    frame = pd.read_csv(tmp_path / "capacity_curve.csv")
    assert len(frame) == 1
    assert frame["capacity"].iloc[0] == pytest.approx(0.5, abs=1e-6)
    assert frame["feedforward"].iloc[0] == pytest.approx(0.5, abs=1e-6)
    assert bool(frame["feedback_ge_feedforward"].iloc[0])
    assert frame["status"].iloc[0] == "ok"


def test_capacity_curve_flags_feedback_below_feedforward(log_file, tmp_path, monkeypatch):
    """Test a grid point where feedback capacity trails feedforward is flagged and exits with code 3."""
    monkeypatch.setattr(cli.capacity, "feedforward_capacity", lambda channel, power: 0.6)
    code = cli.main(["capacity-curve", "--channel", "awgn", "--power-grid", "0", "--out", str(tmp_path)])
    assert code == 3
    frame = pd.read_csv(tmp_path / "capacity_curve.csv")
    assert not bool(frame["feedback_ge_feedforward"].iloc[0])
    assert frame["status"].iloc[0] == "feedback below feedforward"


def test_simulate(log_file, tmp_path):
    """Test a digital run from a saved design."""
    assert cli.main(["design", "--channel", "awgn", "--rate", "1", "--out", str(tmp_path)]) == 0
    code = cli.main([
        "simulate", "--design", str(tmp_path / "design.json"), "--trials", "200", "--T", "10",
        "--out", str(tmp_path),
    ])
    assert code == 0
    frame = pd.read_csv(tmp_path / "digital_pe.csv")
    assert 10 in set(frame["T"])


def test_simulate_horizon_error(log_file, tmp_path):
    """Test a horizon too short for the codebook exits with code 2."""
    assert cli.main(["design", "--channel", "awgn", "--rate", "1", "--out", str(tmp_path)]) == 0
    payload = load_from_json(tmp_path / "design.json")
    payload["sigma_x_star"] = [[100.0]]
    path = export_to_json(payload, tmp_path / "wide.json")
    assert cli.main(["simulate", "--design", str(path), "--trials", "10", "--T", "0", "--out", str(tmp_path)]) == 2


def test_verify_injected_fault(log_file, tmp_path):
    """Test a failing check exits with code 3."""
    code = cli.main(["verify", "--channel", "awgn", "--inject-fault", "awgn_capacity", "--out", str(tmp_path)])
    assert code == 3
    assert (tmp_path / "verify.csv").exists()


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
