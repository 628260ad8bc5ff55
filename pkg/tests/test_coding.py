"""
Unit tests for the coding loop, codebook and error predictors.
"""

import dataclasses

import pytest
import numpy as np
from pathlib import Path
import sys

sys.path.append(str(Path(__file__).parent.parent / "src"))

from feedcap.data.channel import validate
from feedcap.exceptions import DimensionError, HorizonError, ValidationError
from feedcap.models.coding import (
    analog_mse_trajectory,
    build_codebook,
    decode_message,
    decode_messages,
    distortion_rate,
    encode_message,
    encode_messages,
    fit_double_exponential,
    loop_error_covariance,
    run_transmission,
    theoretical_log_pe,
    theoretical_pe,
    transmit_batch,
)
from feedcap.systems.riccati import riccati_trajectory


def test_zero_message_zero_noise(example_design, third_order):
    """Test the loop stays at rest without message or noise."""
    trace = run_transmission(example_design, third_order, [0.0, 0.0], 10, np.zeros(11))
    np.testing.assert_array_equal(trace.u, 0.0)
    np.testing.assert_array_equal(trace.x_hat_0, 0.0)


def test_noiseless_estimate_converges(example_design, third_order):
    """Test the receiver recovers W without noise."""
    W = np.array([-0.2, -0.7])
    trace = run_transmission(example_design, third_order, W, 40, np.zeros(41))
    np.testing.assert_allclose(trace.x_hat_0[-1], W, atol=1e-6)


def test_noiseless_time_varying_gains(example_design, third_order):
    """Test the time-varying schedule also recovers W."""
    W = np.array([0.3, 0.1])
    trace = run_transmission(example_design, third_order, W, 40, np.zeros(41), gains="time_varying")
    np.testing.assert_allclose(trace.x_hat_0[-1], W, atol=1e-6)


def test_strict_causality(example_design, third_order):
    """Test a noise change at t0 leaves u_(<=t0) untouched."""
    rng = np.random.default_rng(1)
    noise = rng.standard_normal(15)
    changed = noise.copy()
    changed[5] += 1.0
    W = [0.1, -0.2]
    a = run_transmission(example_design, third_order, W, 14, noise)
    b = run_transmission(example_design, third_order, W, 14, changed)
    np.testing.assert_array_equal(a.u[:6], b.u[:6])
    assert b.y[5] - a.y[5] == pytest.approx(1.0)
    assert a.u[6] != b.u[6]


def test_physical_channel_drives_outputs(example_design, third_order):
    """Test a different channel of the same order changes y while the encoder keeps its design."""
    other = validate({"kind": "rational", "num": [1.0, 0.2, -0.3], "den": [1.0, 0.0, 0.6, -0.4]})
    assert other.order == third_order.order
    W = [0.3, -0.2]
    noise = np.zeros(11)
    matched = run_transmission(example_design, third_order, W, 10, noise)
    mismatched = run_transmission(example_design, other, W, 10, noise)
    assert matched.y[0] == mismatched.y[0]
    assert matched.u[1] == mismatched.u[1]
    assert not np.allclose(matched.y[1:], mismatched.y[1:])

    default = transmit_batch(example_design, np.asarray(W)[None, :], noise[None, :])
    np.testing.assert_array_equal(matched.y, default.y[0])


def test_modified_matches_literal(example_design):
    """Test both realizations send the same inputs while the literal one is accurate."""
    rng = np.random.default_rng(2)
    W = rng.uniform(-0.5, 0.5, size=(3, 2))
    noise = rng.standard_normal((3, 21))
    modified = transmit_batch(example_design, W, noise)
    literal = transmit_batch(example_design, W, noise, modified=False)
    np.testing.assert_allclose(modified.u, literal.u, atol=1e-8)
    np.testing.assert_allclose(modified.x_hat_0, literal.x_hat_0, atol=1e-8)


def test_bounded_versus_literal_growth(example_design, third_order):
    """Test internal signals stay bounded only in the modified realization."""
    rng = np.random.default_rng(3)
    bounded = run_transmission(example_design, third_order, [0.2, 0.4], 10000, rng.standard_normal(10001))
    assert bounded.peak_internal.max() < 1e3
    literal = run_transmission(
        example_design, third_order, [0.2, 0.4], 100, rng.standard_normal(101), modified=False
    )
    assert np.abs(literal.r).max() > 1e6


def test_transmit_dimension_checks(example_design):
    """Test mismatched message and noise shapes raise."""
    with pytest.raises(DimensionError):
        transmit_batch(example_design, np.zeros((2, 3)), np.zeros((2, 5)))
    with pytest.raises(DimensionError):
        transmit_batch(example_design, np.zeros((2, 2)), np.zeros((3, 5)))
    with pytest.raises(ValidationError):
        transmit_batch(example_design, np.zeros((1, 2)), np.zeros((1, 5)), gains="adaptive")


def test_codebook_scalar_centers(awgn_design):
    """Test a one-dimensional book: sigma^2 = 3/256 at T = 3."""
    book = build_codebook(awgn_design, 3, 0.5)
    assert book.sigmas[0] == pytest.approx(np.sqrt(3.0 / 256.0))
    assert book.M_T == 3
    centers = encode_messages(book, [0, 1, 2]).ravel()
    np.testing.assert_allclose(centers, [-1.0 / 3.0, 0.0, 1.0 / 3.0], atol=1e-12)


def test_codebook_boundaries(awgn_design):
    """Test clamping and ties with two segments."""
    book = build_codebook(awgn_design, 3, 0.6)
    assert book.M_T == 2
    np.testing.assert_allclose(encode_messages(book, [0, 1]).ravel(), [-0.25, 0.25])
    assert decode_message(book, [0.0]) == 0
    assert decode_message(book, [-7.0]) == 0
    assert decode_message(book, [7.0]) == 1
    assert decode_message(book, [0.2]) == 1


def test_single_message_book(awgn_design):
    """Test one segment per side sends the origin."""
    book = build_codebook(awgn_design, 3, 0.99)
    assert book.M_T == 1
    np.testing.assert_allclose(encode_message(book, 0), [0.0])


def test_codebook_invariants(example_design):
    """Test eigen-decomposition, segment counts and rate of the example book."""
    book = build_codebook(example_design, 27, 0.2)
    back = np.linalg.matrix_power(np.linalg.inv(example_design.A_star), 28)
    cov = back @ example_design.sigma_x_star @ back.T
    reconstructed = book.eig_basis @ np.diag(book.sigmas ** 2) @ book.eig_basis.T
    np.testing.assert_allclose(reconstructed, cov, rtol=1e-8, atol=1e-8 * np.abs(cov).max())
    np.testing.assert_array_equal(book.segments_per_side, np.floor(book.sigmas ** -(1.0 - 0.2)).astype(int))
    assert book.M_T == int(np.prod(book.segments_per_side))
    ideal = -(1.0 - 0.2) * np.sum(np.log2(book.sigmas)) / 28
    assert ideal - 2.0 / 28 <= book.rate_actual <= ideal + 1e-12
    assert 0.7 < book.rate_actual < 0.95


def test_codebook_bijective(example_design):
    """Test every index decodes to itself, also after a noiseless transmission."""
    book = build_codebook(example_design, 12, 0.6)
    indices = np.arange(book.M_T)
    points = encode_messages(book, indices)
    np.testing.assert_array_equal(decode_messages(book, points), indices)
    assert np.all(np.abs(points) <= 0.5 * np.sqrt(2.0) + 1e-12)

    batch = transmit_batch(example_design, points, np.zeros((book.M_T, 13)))
    np.testing.assert_array_equal(decode_messages(book, batch.x_hat_0[:, -1, :]), indices)


def test_codebook_errors(awgn_design):
    """Test invalid arguments and too-short horizons."""
    with pytest.raises(ValidationError):
        build_codebook(awgn_design, 3, 1.0)
    book = build_codebook(awgn_design, 3, 0.5)
    with pytest.raises(ValidationError):
        encode_message(book, 3)
    wide = dataclasses.replace(awgn_design, sigma_x_star=np.array([[100.0]]))
    with pytest.raises(HorizonError):
        build_codebook(wide, 0, 0.2)


def test_theoretical_pe_decreasing(example_design):
    """Test the predicted error probability falls with the horizon."""
    pes = [theoretical_pe(example_design, T, 0.2) for T in range(10, 41)]
    assert all(0.0 <= p <= 1.0 for p in pes)
    assert all(b <= a + 1e-15 for a, b in zip(pes, pes[1:]))
    assert 1e-5 < theoretical_pe(example_design, 27, 0.2) < 1e-2


def test_theoretical_pe_vanishes(example_design):
    """Test epsilon near one drives the error probability to zero."""
    assert theoretical_pe(example_design, 60, 0.99) < 1e-12


def test_theoretical_log_pe(example_design):
    """Test the log predictor matches and the decay is double exponential."""
    assert theoretical_log_pe(example_design, 27, 0.2) == pytest.approx(
        np.log(theoretical_pe(example_design, 27, 0.2)), rel=1e-6
    )
    horizons = list(range(30, 91, 5))
    log_pe = [theoretical_log_pe(example_design, T, 0.2) for T in horizons]
    assert all(b < a for a, b in zip(log_pe, log_pe[1:]))
    fit = fit_double_exponential(horizons, log_pe)
    assert fit["start"] == 30
    assert fit["slope"] > 0
    assert fit["r_squared"] >= 0.98


def test_double_exponential_fit_uses_decaying_tail():
    """Test the fit skips horizons before PE starts to decrease strictly."""
    horizons = np.arange(10)
    log_pe = -np.exp(0.3 * horizons + 0.1)
    log_pe[:3] = [-9.5, -9.0, -8.0]
    fit = fit_double_exponential(horizons, log_pe)
    assert fit["start"] == 3
    assert fit["slope"] == pytest.approx(0.3)
    assert fit["intercept"] == pytest.approx(0.1)
    assert fit["r_squared"] == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        fit_double_exponential([0, 1, 2], [-1.0, -0.5, -2.0])


def test_analog_mse_first_step(awgn_design):
    """Test one observation of W through unit noise leaves MSE 1/2."""
    mse = analog_mse_trajectory(awgn_design, 0)[0]
    assert mse[0, 0] == pytest.approx(0.5)


def test_distortion_rate_tends_to_rate(example_design):
    """Test the analog distortion exponent approaches the design rate."""
    assert distortion_rate(example_design, 200) == pytest.approx(example_design.rate, abs=0.01)


def test_loop_covariance_schedules(example_design):
    """Test the time-varying schedule reproduces the Riccati trajectory and steady gains reach Sigma*."""
    exact = loop_error_covariance(example_design, 10, gains="time_varying")
    trajectory = riccati_trajectory(example_design.plant, 11)
    for P, sigma in zip(exact, trajectory.sigmas):
        np.testing.assert_allclose(P, sigma, rtol=1e-8, atol=1e-10)

    steady = loop_error_covariance(example_design, 300)
    np.testing.assert_allclose(steady[-1], example_design.sigma_star, rtol=1e-6, atol=1e-9)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
