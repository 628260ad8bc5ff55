"""
Unit tests for channel validation, realization and simulation.
"""

import pytest
import numpy as np
from pathlib import Path
import sys

sys.path.append(str(Path(__file__).parent.parent / "src"))

from feedcap.data.channel import (
    augment,
    load_channel,
    realize_rational,
    save_channel,
    simulate_channel,
    upper_bound_gain,
    validate,
)
from feedcap.exceptions import (
    DegenerateChannelError,
    EigenvalueCollisionError,
    NonMinimalRealizationError,
    NonMinimumPhaseError,
    UnitCircleError,
    UnstableChannelError,
    ValidationError,
)


def test_third_order_realization(third_order):
    """Test the bundled example channel realization."""
    assert third_order.order == 3
    np.testing.assert_allclose(third_order.F[0], [0.0, -0.6, 0.4], atol=1e-12)
    np.testing.assert_allclose(third_order.H.ravel(), [0.5, -1.0, 0.4], atol=1e-12)
    assert third_order.gain == 1.0


def test_third_order_impulse_response(third_order):
    """Test the first Markov parameters of Z^-1."""
    h = third_order.toeplitz(3).impulse
    np.testing.assert_allclose(h, [1.0, 0.5, -1.0, 0.1], atol=1e-12)


def test_noise_filter_inverts_channel(third_order):
    """Test Z_T Z_T^-1 = I."""
    product = third_order.noise_toeplitz(8).matrix() @ third_order.toeplitz(8).matrix()
    np.testing.assert_allclose(product, np.eye(9), atol=1e-10)


def test_awgn_channel(awgn):
    """Test the memoryless channel."""
    assert awgn.order == 0
    np.testing.assert_allclose(awgn.noise_spectrum(np.linspace(-0.5, 0.5, 5)), 1.0)
    np.testing.assert_allclose(awgn.toeplitz(3).matrix(), np.eye(4))


def test_unstable_channel_rejected():
    """Test a pole outside the unit circle raises."""
    with pytest.raises(UnstableChannelError):
        validate({"kind": "rational", "num": [1.0], "den": [1.0, -1.5]})


def test_non_minimum_phase_rejected():
    """Test Z with a pole outside the circle (zero of Z^-1 outside) raises."""
    with pytest.raises(NonMinimumPhaseError):
        validate({"kind": "rational", "num": [1.0, -2.0], "den": [1.0]})


def test_degenerate_channel_rejected():
    """Test zero feedthrough raises."""
    with pytest.raises(DegenerateChannelError):
        validate({"kind": "rational", "num": [0.0, 1.0], "den": [1.0, 0.5]})


def test_non_minimal_rejected():
    """Test an unobservable realization raises."""
    with pytest.raises(NonMinimalRealizationError):
        validate({"kind": "statespace", "F": [[0.5]], "G": [1.0], "H": [0.0], "D": 1.0})


def test_gain_normalization():
    """Test feedthrough 2 is scaled to 1 and recorded."""
    channel = validate({"kind": "rational", "num": [2.0, 0.4], "den": [1.0, 0.5]})
    assert channel.inv_z.D[0, 0] == 1.0
    assert channel.gain == pytest.approx(0.5)
    assert channel.gain_normalized
    assert channel.toeplitz(0).impulse[0] == 1.0


def test_realize_rational_forms():
    """Test controller and observable forms share the impulse response."""
    num, den = [1.0, 0.5, -0.4], [1.0, 0.0, 0.6, -0.4]
    controller = realize_rational(num, den)
    observable = realize_rational(num, den, form="observable")
    np.testing.assert_allclose(controller.impulse_response(10), observable.impulse_response(10))
    with pytest.raises(ValidationError):
        realize_rational(num, [0.0, 1.0])


def test_augment_rejects_collisions(third_order):
    """Test encoder eigenvalues on the circle or on a channel pole raise."""
    with pytest.raises(UnitCircleError):
        augment(third_order, [[1.0]], [[1.0]])
    poles = np.linalg.eigvals(third_order.F)
    real_pole = float(poles[np.argmin(np.abs(poles.imag))].real)
    with pytest.raises(EigenvalueCollisionError):
        augment(third_order, [[real_pole]], [[1.0]])


def test_simulate_matches_toeplitz(third_order):
    """Test step-by-step simulation equals y = Z^-1 u + N."""
    rng = np.random.default_rng(0)
    u = rng.standard_normal(12)
    noise = rng.standard_normal(12)
    y = simulate_channel(third_order, u, noise)
    np.testing.assert_allclose(y, third_order.toeplitz(11).apply(u) + noise, atol=1e-12)


def test_upper_bound_gain(third_order):
    """Test |Z(z)|^2 at z = 2."""
    expected = (1.1 / 1.15) ** 2
    assert upper_bound_gain(third_order, 2.0) == pytest.approx(expected, rel=1e-10)


def test_save_and_load(third_order, tmp_path):
    """Test saving and reloading a validated channel."""
    path = save_channel(third_order, tmp_path / "channel.json")
    loaded = load_channel(path)
    np.testing.assert_allclose(loaded.F, third_order.F)
    np.testing.assert_allclose(loaded.G, third_order.G)
    np.testing.assert_allclose(loaded.H, third_order.H)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
