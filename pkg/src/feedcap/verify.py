"""
Oracle suites behind ``feedcap verify``.

Each check compares two independent computations of the same quantity and
records the measured discrepancy against its tolerance. The quick suite
covers the Riccati, finite-horizon and design invariants; the full suite
adds the optimizer cross-oracles (grid search, Gauss-Markov, order
sufficiency).
"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence
import logging
import time

import numpy as np
import pandas as pd

from feedcap.data.channel import ChannelModel, augment, bundled_channel
from feedcap.exceptions import FeedcapError
from feedcap.models import capacity, finite_horizon
from feedcap.systems.riccati import solve_steady_by_iteration, solve_steady_by_reduction

logger = logging.getLogger(__name__)

VERIFY_COLUMNS = ["check", "measured", "tolerance", "passed", "seconds", "detail"]


@dataclass
class CheckResult:
    check: str
    measured: float
    tolerance: float
    detail: str = ""
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.measured) and self.measured <= self.tolerance)


def _relative(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


def _random_cfgs(seed: int, count: int, max_T: int = 12) -> List[finite_horizon.GeneralCodingConfig]:
    rng = np.random.default_rng(seed)
    cfgs = []
    for _ in range(count):
        m = int(rng.integers(0, 4))
        channel = finite_horizon.random_channel(rng, m)
        cfgs.append(
            finite_horizon.random_config(
                rng,
                n=int(rng.integers(0, 3)),
                channel=channel,
                T=int(rng.integers(1, max_T + 1)),
                unstable_band=(1.1, 1.8),
            )
        )
    return cfgs


def check_riccati_paths(seed: int = 1, count: int = 20) -> CheckResult:
    """Iteration vs Sylvester reduction on random plants (entry-wise, relative)."""
    worst = 0.0
    for cfg in _random_cfgs(seed, count):
        plant = cfg.plant
        by_iteration = solve_steady_by_iteration(plant)
        by_reduction = solve_steady_by_reduction(plant)
        scale = max(1.0, float(np.max(np.abs(by_iteration.sigma))))
        worst = max(worst, float(np.max(np.abs(by_iteration.sigma - by_reduction.sigma))) / scale)
    return CheckResult("riccati_two_path", worst, 1e-8, f"{count} random plants")


def check_information_chain(seed: int = 2, count: int = 20) -> List[CheckResult]:
    """Five information expressions and the two input-power paths."""
    spread, power_gap = 0.0, 0.0
    for cfg in _random_cfgs(seed, count):
        report = finite_horizon.mmse_fisher_crb(cfg)
        values = list(report.mutual_info_paths.values())
        spread = max(spread, (max(values) - min(values)) / max(1.0, abs(report.mutual_info_bits)))
        power_gap = max(power_gap, _relative(report.input_power, report.input_power_riccati))
    return [
        CheckResult("information_chain", spread, 1e-8, f"{count} random configurations"),
        CheckResult("power_identity", power_gap, 1e-8, "MMSE path vs Riccati path"),
    ]


def check_feedback_optimality(seed: int = 3, count: int = 10, perturbations: int = 100) -> List[CheckResult]:
    """Kalman-built estimator vs normal equations, and no perturbation does better."""
    rng = np.random.default_rng(seed + 1000)
    gap, violation = 0.0, 0.0
    for cfg in _random_cfgs(seed, count, max_T=8):
        _, g_hat = finite_horizon.optimal_feedback_generator(cfg)
        reference = finite_horizon.normal_equations_feedback(cfg)
        best = np.trace(finite_horizon.estimator_input_covariance(cfg, g_hat))
        gap = max(gap, _relative(best, np.trace(finite_horizon.estimator_input_covariance(cfg, reference))))
        for _ in range(perturbations):
            delta = np.tril(rng.standard_normal(g_hat.shape), -1) * 1e-2
            perturbed = np.trace(finite_horizon.estimator_input_covariance(cfg, g_hat + delta))
            violation = max(violation, (best - perturbed) / max(1.0, best))
    return [
        CheckResult("feedback_normal_equations", gap, 1e-8, "input power, T <= 8"),
        CheckResult("feedback_perturbation", violation, 1e-12, f"{perturbations} perturbations per instance"),
    ]


def check_innovations(seed: int = 4, count: int = 10) -> List[CheckResult]:
    """Whiteness of innovations and orthogonality of inputs to past innovations."""
    white, orthogonal = 0.0, 0.0
    for cfg in _random_cfgs(seed, count):
        k_e, k_ue = finite_horizon.innovation_cross_covariance(cfg)
        scale = max(1.0, float(np.max(np.diag(k_e))))
        white = max(white, float(np.max(np.abs(np.tril(k_e, -1)))) / scale)
        orthogonal = max(orthogonal, float(np.max(np.abs(np.tril(k_ue, -1)))) / scale)
    return [
        CheckResult("innovation_whiteness", white, 1e-9),
        CheckResult("input_innovation_orthogonality", orthogonal, 1e-10),
    ]


def check_cp_roundtrip(seed: int = 5, count: int = 10, T: int = 6) -> List[CheckResult]:
    """Conversion to the u = B Z N + v parametrization and back keeps K_u and I(W; y)."""
    rng = np.random.default_rng(seed + 1000)
    cov_gap, info_gap = 0.0, 0.0
    for cfg in _random_cfgs(seed, count, max_T=T):
        feedback = np.tril(rng.standard_normal((cfg.size, cfg.size)), -1) * 0.3
        k_r, b = finite_horizon.cp_convert(cfg, feedback)
        k_u = finite_horizon.cp_input_covariance(k_r, b, cfg.channel)
        A, C, back = finite_horizon.cp_convert_back(k_r, b, cfg.T, cfg.channel)
        rebuilt = finite_horizon.GeneralCodingConfig(A=A, C=C, T=cfg.T, channel=cfg.channel)
        k_u_back = finite_horizon.input_covariance(rebuilt, back)
        direct = finite_horizon.input_covariance(cfg, feedback)
        scale = max(1.0, float(np.max(np.abs(direct))))
        cov_gap = max(cov_gap, float(np.max(np.abs(k_u - direct))) / scale,
                      float(np.max(np.abs(k_u_back - direct))) / scale)
        info_gap = max(
            info_gap,
            _relative(finite_horizon.cp_mutual_info(k_r, cfg.channel), finite_horizon.mutual_info_matrix_form(cfg)),
        )
    return [
        CheckResult("cp_roundtrip_covariance", cov_gap, 1e-8, f"T <= {T}"),
        CheckResult("cp_mutual_info", info_gap, 1e-8),
    ]


def check_design(channel: ChannelModel, rate: float = 1.0, restarts: Optional[int] = None) -> List[CheckResult]:
    """Structural invariants, all-pass flatness and Bode integral of the optimal loop."""
    design = capacity.power_for_rate(channel, rate, restarts=restarts)
    valid, issues = design.check_invariants()
    rate_gap = abs(0.5 * np.log2(design.ke) - rate)
    bound_excess = max(0.0, design.power - capacity.upper_bound(channel, rate))
    bode_gap = abs(capacity.bode_integral(design) - np.log(design.degree_of_instability))
    return [
        CheckResult("design_invariants", 0.0 if valid else 1.0, 0.5, "; ".join(issues)),
        CheckResult("steady_rate_identity", rate_gap, 1e-6, f"R = {rate}"),
        CheckResult("upper_bound", bound_excess, 1e-6, f"P = {design.power:.6f}"),
        CheckResult("allpass_flatness", capacity.allpass_deviation(design), 1e-6, "128 frequencies"),
        CheckResult("bode_integral", bode_gap, 1e-3),
    ]


def check_awgn(powers: Sequence[float] = (1.0, 3.0, 15.0)) -> CheckResult:
    """AWGN capacity equals 1/2 log2(1 + P)."""
    awgn = bundled_channel("awgn")
    worst = 0.0
    for power in powers:
        rate, _ = capacity.capacity_for_power(awgn, power)
        worst = max(worst, abs(rate - 0.5 * np.log2(1.0 + power)))
    return CheckResult("awgn_capacity", worst, 1e-6, f"P in {list(powers)}")


def check_grid_search(channel: ChannelModel, rate: float = 1.0, restarts: Optional[int] = None) -> CheckResult:
    """Optimizer vs exhaustive grid on the order-1 encoder family."""
    design = capacity.power_for_rate(channel, rate, restarts=restarts)
    grid_power, _, _ = capacity.grid_search_power(channel, rate, n=1)
    return CheckResult("grid_search_oracle", abs(grid_power - design.power), 1e-3)


def check_gauss_markov(channel: ChannelModel, power: float = 0.743, restarts: Optional[int] = None) -> CheckResult:
    """Gauss-Markov maximization vs capacity_for_power."""
    rate, _ = capacity.capacity_for_power(channel, power, restarts=restarts)
    gm_rate, _ = capacity.gm_capacity_for_power(channel, power)
    return CheckResult("gauss_markov_oracle", abs(rate - gm_rate), 3e-3, f"P = {power}")


def check_order_sufficiency(channel: ChannelModel, rate: float = 1.0, restarts: Optional[int] = None) -> CheckResult:
    """Raising the first-pass order from m-1 to m does not lower the objective."""
    base = capacity.minimize_power(channel, rate, max(channel.order - 1, 0), restarts=restarts)
    higher = capacity.minimize_power(channel, rate, channel.order, restarts=restarts)
    return CheckResult("order_sufficiency", max(0.0, base.objective - higher.objective), 1e-4)


def _timed(fn: Callable, *args, **kwargs) -> List[CheckResult]:
    start = time.perf_counter()
    try:
        out = fn(*args, **kwargs)
    except FeedcapError as e:
        logger.error(f"{fn.__name__} failed: {e}", exc_info=True)
        out = CheckResult(fn.__name__, np.inf, 0.0, f"error: {e}")
    results = out if isinstance(out, list) else [out]
    elapsed = time.perf_counter() - start
    for result in results:
        result.seconds = elapsed / len(results)
    return results


def run_verification(
    channel: Optional[ChannelModel] = None,
    full: bool = False,
    restarts: Optional[int] = None,
    inject_fault: Optional[str] = None,
) -> pd.DataFrame:
    """
    Run the oracle suites.

    Args:
        channel: Channel for the design checks (bundled worked example by default)
        full: Include the optimizer cross-oracles
        restarts: Optimizer restarts for the design checks
        inject_fault: Name of a check whose measurement is corrupted (harness test)

    Returns:
        DataFrame with columns check, measured, tolerance, passed, seconds, detail
    """
    channel = bundled_channel("third_order") if channel is None else channel
    results: List[CheckResult] = []
    results += _timed(check_riccati_paths)
    results += _timed(check_information_chain)
    results += _timed(check_feedback_optimality)
    results += _timed(check_innovations)
    results += _timed(check_cp_roundtrip)
    results += _timed(check_design, channel, restarts=restarts)
    results += _timed(check_awgn)
    if full:
        if channel.order >= 1:
            results += _timed(check_grid_search, channel, restarts=restarts)
            results += _timed(check_gauss_markov, channel, restarts=restarts)
        results += _timed(check_order_sufficiency, channel, restarts=restarts)

    for result in results:
        if result.check == inject_fault:
            result.measured = result.tolerance + 1.0
            result.detail = "injected fault"

    frame = pd.DataFrame(
        [
            {
                "check": r.check,
                "measured": r.measured,
                "tolerance": r.tolerance,
                "passed": r.passed,
                "seconds": round(r.seconds, 3),
                "detail": r.detail,
            }
            for r in results
        ],
        columns=VERIFY_COLUMNS,
    )
    failed = int((~frame["passed"]).sum())
    logger.info(f"Verification: {len(frame) - failed}/{len(frame)} checks passed")
    return frame
