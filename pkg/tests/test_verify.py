"""
Tests for the oracle suites.
"""

import pytest
from pathlib import Path
import sys

sys.path.append(str(Path(__file__).parent.parent / "src"))

from feedcap import verify


def test_check_result_pass_rule():
    """Test a check passes only with a finite measurement within tolerance."""
    assert verify.CheckResult("a", 1e-9, 1e-8).passed
    assert not verify.CheckResult("b", 1e-7, 1e-8).passed
    assert not verify.CheckResult("c", float("nan"), 1.0).passed


def test_design_checks_awgn(awgn):
    """Test the design oracles on the memoryless channel."""
    results = {r.check: r for r in verify.check_design(awgn)}
    assert set(results) == {
        "design_invariants", "steady_rate_identity", "upper_bound", "allpass_flatness", "bode_integral"
    }
    assert all(r.passed for r in results.values())


def test_design_checks_example(third_order):
    """Test the design oracles on the worked-example channel."""
    assert all(r.passed for r in verify.check_design(third_order))


def test_riccati_and_awgn_checks():
    """Test the two-path Riccati and AWGN capacity oracles."""
    assert verify.check_riccati_paths().passed
    assert verify.check_awgn().passed


def test_run_verification_with_fault(awgn):
    """Test the table layout and that an injected fault is reported."""
    table = verify.run_verification(awgn, inject_fault="awgn_capacity")
    assert list(table.columns) == verify.VERIFY_COLUMNS
    row = table.set_index("check").loc["awgn_capacity"]
    assert not row["passed"]
    assert row["detail"] == "injected fault"
    assert table.set_index("check").loc["design_invariants", "passed"]


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
