"""
Unit tests for state-space, Sylvester and Toeplitz helpers.
"""

import pytest
import numpy as np
from pathlib import Path
import sys

sys.path.append(str(Path(__file__).parent.parent / "src"))

from feedcap.exceptions import DimensionError, SingularEquationError, SingularityError
from feedcap.systems.statespace import (
    StateSpaceSystem,
    ToeplitzOperator,
    companion_form,
    degree_of_instability,
    eigen_spectrum,
    evaluate_transfer,
    frequency_response,
    is_controllable,
    is_observable,
    solve_sylvester,
    toeplitz_of,
)


@pytest.fixture
def first_order():
    """Z^-1 = (1 + 0.3 z^-1) / (1 - 0.5 z^-1) in controller form."""
    return StateSpaceSystem(A=[[0.5]], B=[[1.0]], C=[[0.8]], D=[[1.0]])


def test_companion_form_layout():
    """Test shift structure and last row of the companion matrix."""
    M = companion_form(-2.0, [-0.887])
    np.testing.assert_allclose(M, [[0.0, 1.0], [-2.0, -0.887]])

    M3 = companion_form(3.0, [0.1, 0.2])
    assert M3.shape == (3, 3)
    np.testing.assert_allclose(M3[:2, 1:], np.eye(2))
    # det of a companion matrix is (-1)^n times the corner entry
    assert np.linalg.det(M3) == pytest.approx(3.0)


def test_eigen_spectrum_classification():
    """Test counting of unstable and unit-circle eigenvalues."""
    spectrum = eigen_spectrum(np.diag([2.0, 0.5, 1.0, -3.0]))
    assert spectrum.unstable_count == 2
    assert spectrum.unit_circle_count == 1
    assert spectrum.stable_count == 1
    assert spectrum.spectral_radius == pytest.approx(3.0)


def test_degree_of_instability():
    """Test DI is the product of unstable magnitudes and 1 when stable."""
    assert degree_of_instability(np.diag([2.0, -3.0, 0.5])) == pytest.approx(6.0)
    assert degree_of_instability(np.diag([0.2, 0.5])) == 1.0
    assert degree_of_instability(companion_form(-2.0, [-0.887])) == pytest.approx(2.0)


def test_observability_and_controllability():
    """Test rank tests on simple pairs."""
    A = np.diag([2.0, 3.0])
    assert is_observable(A, [[1.0, 1.0]])
    assert not is_observable(A, [[1.0, 0.0]])
    assert is_controllable(A, [[1.0], [1.0]])
    assert not is_controllable(A, [[0.0], [1.0]])


def test_sylvester_residual():
    """Test the Sylvester solution satisfies F phi - phi A = Q."""
    rng = np.random.default_rng(3)
    F = np.diag([0.3, -0.4, 0.1])
    A = companion_form(-2.0, [-0.887])
    Q = rng.standard_normal((3, 2))
    phi = solve_sylvester(F, A, Q)
    np.testing.assert_allclose(F @ phi - phi @ A, Q, atol=1e-10)


def test_sylvester_empty_and_singular():
    """Test empty inputs and overlapping spectra."""
    assert solve_sylvester(np.zeros((0, 0)), [[2.0]], np.zeros((0, 1))).shape == (0, 1)
    with pytest.raises(SingularEquationError):
        solve_sylvester([[0.5]], [[0.5]], [[1.0]])


def test_impulse_response(first_order):
    """Test Markov parameters of a first-order system."""
    h = first_order.impulse_response(3)
    np.testing.assert_allclose(h, [1.0, 0.8, 0.4, 0.2])


def test_toeplitz_apply_and_inverse(first_order):
    """Test the Toeplitz operator against its dense matrix and inverse."""
    op = toeplitz_of(first_order, 6)
    x = np.arange(7.0)
    np.testing.assert_allclose(op.apply(x), op.matrix() @ x)
    np.testing.assert_allclose(op.matrix() @ op.inverse().matrix(), np.eye(7), atol=1e-12)
    np.testing.assert_allclose(op.apply(x), first_order.simulate(x))


def test_toeplitz_validation():
    """Test strictly causal operators need h0 = 0 and cannot be inverted."""
    with pytest.raises(DimensionError):
        ToeplitzOperator(np.array([1.0, 2.0]), strictly_causal=True)
    op = ToeplitzOperator(np.array([0.0, 1.0]), strictly_causal=True)
    with pytest.raises(SingularEquationError):
        op.inverse()


def test_frequency_response(first_order):
    """Test frequency response equals the rational transfer function."""
    theta = np.linspace(-0.5, 0.5, 11)
    z = np.exp(2j * np.pi * theta)
    expected = (1.0 + 0.3 / z) / (1.0 - 0.5 / z)
    np.testing.assert_allclose(frequency_response(first_order, theta), expected)
    assert evaluate_transfer(first_order, 2.0) == pytest.approx((1.0 + 0.15) / (1.0 - 0.25))


def test_evaluate_at_pole(first_order):
    """Test evaluating at a pole raises."""
    with pytest.raises(SingularityError):
        evaluate_transfer(first_order, 0.5)


def test_static_gain():
    """Test the memoryless system."""
    sys_ = StateSpaceSystem.static_gain(2.0)
    assert sys_.state_dim == 0
    np.testing.assert_allclose(sys_.impulse_response(2), [2.0, 0.0, 0.0])


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
