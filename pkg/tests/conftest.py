"""
Shared fixtures for the test suite.
"""

import pytest
from pathlib import Path
import sys

sys.path.append(str(Path(__file__).parent.parent / "src"))

from feedcap.data.channel import bundled_channel
from feedcap.models.capacity import power_for_rate
from feedcap.models.finite_horizon import first_order_channel


@pytest.fixture(scope="session")
def third_order():
    """Bundled third-order ISI channel of the worked example."""
    return bundled_channel("third_order")


@pytest.fixture(scope="session")
def awgn():
    """Memoryless channel (m = 0)."""
    return bundled_channel("awgn")


@pytest.fixture(scope="session")
def scalar_channel():
    """First-order channel (1 + 0.3 z^-1) / (1 - 0.5 z^-1)."""
    return first_order_channel(pole=0.5, zero=-0.3)


@pytest.fixture(scope="session")
def example_design(third_order):
    """Optimal encoder for the worked example at one bit per channel use."""
    return power_for_rate(third_order, 1.0)


@pytest.fixture(scope="session")
def awgn_design(awgn):
    """Optimal encoder for the memoryless channel at one bit per channel use."""
    return power_for_rate(awgn, 1.0)
