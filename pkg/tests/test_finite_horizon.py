"""
Unit tests for the dense finite-horizon oracles.
"""

import pytest
import numpy as np
from pathlib import Path
import sys

sys.path.append(str(Path(__file__).parent.parent / "src"))

from feedcap.exceptions import UnitCircleError, ValidationError
from feedcap.models.finite_horizon import (
    GeneralCodingConfig,
    cp_convert,
    cp_convert_back,
    cp_input_covariance,
    cp_mutual_info,
    estimator_input_covariance,
    fisher_information,
    innovation_cross_covariance,
    input_covariance,
    input_power_mmse,
    input_power_riccati,
    input_power_with_feedback,
    mmse_fisher_crb,
    mmse_matrix,
    mutual_info_explicit,
    mutual_info_matrix_form,
    mutual_info_riccati,
    normal_equations_feedback,
    optimal_feedback_generator,
    random_channel,
    random_config,
)


@pytest.fixture(scope="module")
def configs():
    """Random encoders over random channels of order 0..2."""
    rng = np.random.default_rng(2024)
    out = []
    for _ in range(20):
        channel = random_channel(rng, int(rng.integers(0, 3)))
        out.append(
            random_config(
                rng,
                n=int(rng.integers(0, 3)),
                channel=channel,
                T=int(rng.integers(2, 11)),
                unstable_band=(1.1, 1.8),
            )
        )
    return out


def _random_feedback(rng, size, scale=0.3):
    return np.tril(scale * rng.standard_normal((size, size)), -1)


def test_scalar_information(awgn):
    """Test one use of y = W + N carries 1/2 bit on every path."""
    cfg = GeneralCodingConfig(A=[[2.0]], C=[[1.0]], T=0, channel=awgn)
    assert mutual_info_matrix_form(cfg) == pytest.approx(0.5)
    assert mutual_info_explicit(cfg) == pytest.approx(0.5)
    assert mutual_info_riccati(cfg) == pytest.approx(0.5)


def test_scalar_mmse(awgn):
    """Test MMSE = 1 / (1 + C^2) after one observation."""
    assert mmse_matrix(GeneralCodingConfig(A=[[2.0]], C=[[1.0]], T=0, channel=awgn))[0, 0] == pytest.approx(0.5)
    assert mmse_matrix(GeneralCodingConfig(A=[[2.0]], C=[[2.0]], T=0, channel=awgn))[0, 0] == pytest.approx(0.2)


def test_information_paths_agree(configs):
    """Test the information paths agree on random configurations."""
    for cfg in configs:
        report = mmse_fisher_crb(cfg)
        scale = max(1.0, abs(report.mutual_info_bits))
        assert report.max_path_spread() <= 1e-7 * scale
        assert report.rate == pytest.approx(report.mutual_info_bits / (cfg.T + 1))


def test_fisher_inverts_mmse(configs):
    """Test the Bayesian Fisher information is the inverse MMSE."""
    for cfg in configs:
        product = fisher_information(cfg) @ mmse_matrix(cfg)
        np.testing.assert_allclose(product, np.eye(cfg.k), atol=1e-7)


def test_power_identity(configs):
    """Test the MMSE and Riccati power expressions agree."""
    for cfg in configs:
        assert input_power_mmse(cfg) == pytest.approx(input_power_riccati(cfg), rel=1e-7)


def test_information_independent_of_feedback(configs):
    """Test a strictly causal feedback generator leaves I(W; y) unchanged."""
    rng = np.random.default_rng(0)
    for cfg in configs[:10]:
        feedback = _random_feedback(rng, cfg.size)
        assert mutual_info_explicit(cfg, feedback) == pytest.approx(mutual_info_explicit(cfg), rel=1e-8, abs=1e-10)


def test_feedback_must_be_strictly_causal(configs):
    """Test a generator with a diagonal entry is rejected."""
    cfg = configs[0]
    with pytest.raises(ValidationError):
        mutual_info_explicit(cfg, np.eye(cfg.size))


def test_optimal_feedback_structure(configs):
    """Test G* and G_hat are strictly lower and G_hat matches the normal equations."""
    for cfg in configs:
        g_star, g_hat = optimal_feedback_generator(cfg)
        np.testing.assert_array_equal(np.triu(g_star), 0.0)
        np.testing.assert_array_equal(g_star[0], 0.0)
        reference = normal_equations_feedback(cfg)
        np.testing.assert_allclose(g_hat, reference, atol=1e-6 * max(1.0, np.abs(reference).max()))


def test_optimal_feedback_power(configs):
    """Test G* attains the MMSE power and local perturbations do not lower it."""
    rng = np.random.default_rng(1)
    for cfg in configs[:10]:
        g_star, g_hat = optimal_feedback_generator(cfg)
        best = input_power_with_feedback(cfg, g_star)
        assert best == pytest.approx(input_power_mmse(cfg), rel=1e-7)
        assert best <= input_power_with_feedback(cfg) + 1e-9
        for _ in range(5):
            nudged = g_star + _random_feedback(rng, cfg.size, scale=1e-2)
            assert input_power_with_feedback(cfg, nudged) >= best - 1e-9 * max(1.0, best)
        np.testing.assert_allclose(
            input_covariance(cfg, g_star),
            estimator_input_covariance(cfg, g_hat),
            atol=1e-7 * max(1.0, best * cfg.size),
        )


def test_innovations_white_and_orthogonal(configs):
    """Test E[e_t e_tau] = 0 and E[u_t e_tau] = 0 for tau < t."""
    for cfg in configs:
        k_e, k_ue = innovation_cross_covariance(cfg)
        scale = max(1.0, np.abs(np.diag(k_e)).max())
        assert np.abs(np.tril(k_e, -1)).max(initial=0.0) <= 1e-8 * scale
        assert np.abs(np.tril(k_ue, -1)).max(initial=0.0) <= 1e-8 * scale


def test_cp_zero_feedback(configs):
    """Test G = 0 maps to B = 0 and K_r = Gamma Gamma'."""
    cfg = configs[0]
    k_r, b = cp_convert(cfg, np.zeros((cfg.size, cfg.size)))
    np.testing.assert_array_equal(b, 0.0)
    np.testing.assert_allclose(k_r, cfg.gamma @ cfg.gamma.T)


def test_cp_equivalence(configs):
    """Test the converted pair reproduces K_u and the information."""
    for cfg in configs[:10]:
        g_star, _ = optimal_feedback_generator(cfg)
        k_r, b = cp_convert(cfg, g_star)
        k_u = input_covariance(cfg, g_star)
        np.testing.assert_allclose(
            cp_input_covariance(k_r, b, cfg.channel), k_u, atol=1e-7 * max(1.0, np.abs(k_u).max())
        )
        assert cp_mutual_info(k_r, cfg.channel) == pytest.approx(mutual_info_matrix_form(cfg), rel=1e-8, abs=1e-10)


def test_cp_convert_back_low_rank(configs):
    """Test a rank-k K_r is realized by a similar encoder with the same feedback."""
    for cfg in configs[:10]:
        if cfg.T < 2 * cfg.k:
            continue
        g_star, _ = optimal_feedback_generator(cfg)
        k_r, b = cp_convert(cfg, g_star)
        A, C, feedback = cp_convert_back(k_r, b, cfg.T, cfg.channel)
        np.testing.assert_allclose(
            np.sort_complex(np.linalg.eigvals(A)), np.sort_complex(np.linalg.eigvals(cfg.A)), atol=1e-5
        )
        np.testing.assert_allclose(feedback, g_star, atol=1e-6 * max(1.0, np.abs(g_star).max()))
        rebuilt = GeneralCodingConfig(A=A, C=C, T=cfg.T, channel=cfg.channel)
        np.testing.assert_allclose(
            rebuilt.gamma @ rebuilt.gamma.T, k_r, atol=1e-7 * max(1.0, np.abs(k_r).max())
        )


def test_cp_convert_back_full_rank(awgn):
    """Test K_r = I is realized by the cyclic shift with corner entry 2."""
    A, C, feedback = cp_convert_back(np.eye(4), np.zeros((4, 4)), 3, awgn)
    expected = np.eye(4, k=1)
    expected[-1, 0] = 2.0
    np.testing.assert_allclose(A, expected, atol=1e-12)
    np.testing.assert_allclose(C, [[1.0, 0.0, 0.0, 0.0]], atol=1e-12)
    np.testing.assert_array_equal(feedback, 0.0)
    rebuilt = GeneralCodingConfig(A=A, C=C, T=3, channel=awgn)
    np.testing.assert_allclose(rebuilt.gamma @ rebuilt.gamma.T, np.eye(4), atol=1e-12)


def test_config_validation(awgn):
    """Test unobservable, unit-circle and out-of-range configurations raise."""
    with pytest.raises(ValidationError):
        GeneralCodingConfig(A=np.diag([2.0, 3.0]), C=[[1.0, 0.0]], T=3, channel=awgn)
    with pytest.raises(UnitCircleError):
        GeneralCodingConfig(A=[[1.0]], C=[[1.0]], T=3, channel=awgn)
    with pytest.raises(ValidationError):
        GeneralCodingConfig(A=[[2.0]], C=[[1.0]], T=-1, channel=awgn)


def test_random_config_bands(awgn):
    """Test sampled eigenvalues respect the unstable band."""
    rng = np.random.default_rng(7)
    for _ in range(10):
        cfg = random_config(rng, n=2, channel=awgn, T=4, unstable_band=(1.2, 1.5), stable_probability=0.0)
        mags = np.abs(np.linalg.eigvals(cfg.A))
        assert np.all(mags > 1.2 - 1e-9)
        assert np.all(mags < 1.5 + 1e-9)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
