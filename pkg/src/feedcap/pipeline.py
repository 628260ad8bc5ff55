"""
End-to-end worked example: third-order ISI channel at one bit per use.

Runs the design, the digital error-probability experiment and the analog
convergence experiment, writes every artifact under one output directory
and compares the headline numbers against their reference values.
"""

from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union
from datetime import datetime
import logging

import numpy as np
import pandas as pd

from feedcap.config import EXAMPLE_CONFIG, OUTPUT_DIR, SIMULATION_CONFIG
from feedcap.data.channel import load_channel
from feedcap.models import capacity, coding
from feedcap.simulation import monte_carlo
from feedcap.utils import export_to_json, format_bits, format_power

logger = logging.getLogger(__name__)


def _banner(title: str) -> None:
    logger.info("=" * 70)
    logger.info(title)
    logger.info("=" * 70)


def compare_to_reference(design: capacity.EncoderDesign, digital: monte_carlo.SimResult,
                         analog: monte_carlo.SimResult) -> pd.DataFrame:
    """
    Compare the example outputs with their reference values.

    The empirical error probability at the last horizon must lie within two
    binomial standard deviations of theoretical_pe.

    Returns:
        DataFrame with columns quantity, value, reference, delta, tolerance, passed
    """
    ref = EXAMPLE_CONFIG
    a1 = float(design.A_star[-1, -1]) if design.n_star == 1 else np.nan
    final_T = max(digital.empirical_pe_by_T)
    estimate = digital.empirical_pe_by_T[final_T]
    pe = estimate.pe
    pe_theory = digital.theoretical_pe_by_T[final_T]
    pe_sigma = float(np.sqrt(pe_theory * (1.0 - pe_theory) / estimate.trials))
    power_avg = float(analog.avg_power_trace[-1])

    rows = [
        ("power", design.power, ref["power"], ref["power_tol"]),
        ("n_star", design.n_star, ref["n_star"], 0.0),
        ("a1", a1, ref["a1"], ref["a1_tol"]),
        ("ke", design.ke, 2.0 ** (2 * ref["rate"]), 1e-6),
        ("pe_empirical_below", pe, 0.0, 1e-2),
        ("pe_matches_theory", pe, pe_theory, 2.0 * pe_sigma),
        ("analog_power_avg", power_avg, design.power, 0.05 * design.power),
    ]
    frame = pd.DataFrame(
        [
            {
                "quantity": name,
                "value": value,
                "reference": reference,
                "delta": value - reference,
                "tolerance": tol,
                "passed": bool(abs(value - reference) <= tol) if np.isfinite(value) else False,
            }
            for name, value, reference, tol in rows
        ]
    )
    return frame


def run_example(
    out_dir: Union[str, Path, None] = None,
    seed: Optional[int] = None,
    trials: Optional[int] = None,
    analog_trials: int = 1000,
    restarts: Optional[int] = None,
    n_jobs: Optional[int] = None,
) -> Tuple[Dict[str, Any], bool]:
    """
    Reproduce the worked example end to end.

    Args:
        out_dir: Output directory (default OUTPUT_DIR / "example")
        seed: Monte Carlo seed; the design does not depend on it
        trials: Digital trials
        analog_trials: Trials averaged in the analog power experiment
        restarts: Optimizer restarts
        n_jobs: Worker threads

    Returns:
        Tuple of (report dictionary, all reference checks passed)
    """
    out_dir = Path(out_dir) if out_dir is not None else OUTPUT_DIR / "example"
    seed = SIMULATION_CONFIG["seed"] if seed is None else seed
    trials = SIMULATION_CONFIG["trials"] if trials is None else trials
    T = EXAMPLE_CONFIG["horizon"]
    epsilon = EXAMPLE_CONFIG["epsilon"]

    _banner("FEEDBACK CAPACITY WORKED EXAMPLE")
    logger.info(f"Started at: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")

    try:
        # Step 1: design
        _banner("STEP 1: OPTIMAL ENCODER DESIGN")
        channel = load_channel(EXAMPLE_CONFIG["channel_file"])
        design = capacity.power_for_rate(channel, EXAMPLE_CONFIG["rate"], restarts=restarts, n_jobs=n_jobs)
        design_file = export_to_json(design.to_dict(), out_dir / "design.json")
        logger.info(f"✓ n* = {design.n_star}, branch {design.branch}")
        logger.info(f"✓ P_inf = {format_power(design.power)}")
        logger.info(f"✓ Eigenvalues of A*: {np.round(np.linalg.eigvals(design.A_star), 4)}")

        # Step 2: digital transmission
        _banner("STEP 2: DIGITAL TRANSMISSION")
        book = coding.build_codebook(design, T, epsilon)
        logger.info(f"✓ Codebook: M_T = {book.M_T:,} messages, {format_bits(book.rate_actual)}")
        digital = monte_carlo.run_digital(
            monte_carlo.SimConfig(
                design=design,
                trials=trials,
                T=T,
                epsilon=epsilon,
                seed=seed,
                gains=EXAMPLE_CONFIG["gains"],
                n_jobs=n_jobs,
            )
        )
        digital_files = monte_carlo.export(digital, out_dir, prefix="digital")

        # Step 3: analog transmission
        _banner("STEP 3: ANALOG TRANSMISSION")
        analog = monte_carlo.run_analog(
            monte_carlo.SimConfig(
                design=design,
                trials=analog_trials,
                T=EXAMPLE_CONFIG["analog_horizon"],
                seed=seed,
                mode="analog",
                W_fixed=EXAMPLE_CONFIG["W"],
                keep_traces=1,
                n_jobs=n_jobs,
            )
        )
        analog_files = monte_carlo.export(analog, out_dir, prefix="analog")

        # Step 4: comparison
        _banner("STEP 4: COMPARISON WITH REFERENCE VALUES")
        comparison = compare_to_reference(design, digital, analog)
        comparison_file = out_dir / "comparison.csv"
        comparison.to_csv(comparison_file, index=False)
        for row in comparison.itertuples():
            mark = "✓" if row.passed else "✗"
            logger.info(f"  {mark} {row.quantity}: {row.value:.6g} (reference {row.reference:.6g}, delta {row.delta:+.3g})")

        passed = bool(comparison["passed"].all())
        report = {
            "design": design.summary(),
            "codebook": book.summary(),
            "comparison": comparison.to_dict(orient="records"),
            "passed": passed,
            "files": {
                "design": design_file,
                "comparison": comparison_file,
                **{f"digital_{k}": v for k, v in digital_files.items()},
                **{f"analog_{k}": v for k, v in analog_files.items()},
            },
        }
        export_to_json(report, out_dir / "report.json")

        _banner("EXAMPLE COMPLETED" if passed else "EXAMPLE FINISHED WITH DEVIATIONS")
        logger.info(f"Finished at: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
        return report, passed

    except Exception as e:
        logger.error(f"Example failed: {str(e)}", exc_info=True)
        raise
