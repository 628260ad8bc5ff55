"""
Configuration settings for the feedback-capacity toolkit.
"""

from pathlib import Path
from typing import Dict, Any
import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Project paths
PACKAGE_ROOT = Path(__file__).parent
PROJECT_ROOT = PACKAGE_ROOT.parent.parent
CHANNELS_DIR = PACKAGE_ROOT / "data" / "channels"
OUTPUT_DIR = Path(os.getenv("FEEDCAP_OUTPUT_DIR", str(PROJECT_ROOT / "output")))
LOGS_DIR = PROJECT_ROOT / "logs"

# Numerical tolerances shared by the linear-algebra layers
NUMERICS_CONFIG = {
    "tau_circ": 1e-9,
    "tau_syl": 1e-10,
    "riccati_tol": float(os.getenv("FEEDCAP_RICCATI_TOL", "1e-12")),
    "riccati_max_iter": int(os.getenv("FEEDCAP_RICCATI_MAX_ITER", "200000")),
    "rank_rel_threshold": 1e-6,
    "residual_tol": 1e-9,
    "collision_tol": 1e-6,
}

# Capacity optimizer configuration
OPTIMIZER_CONFIG = {
    "restarts": int(os.getenv("FEEDCAP_RESTARTS", "32")),
    "start_box": 3.0,
    "seed": 0,
    "branch_tie_tol": 1e-9,
    "nstar_margin": 1e-3,
    "bracket": (1e-4, 20.0),
    "bracket_expansions": 8,
    "rate_xtol": 1e-10,
    "capacity_tol": 1e-6,
    "gm_restarts": int(os.getenv("FEEDCAP_GM_RESTARTS", "8")),
    "nelder_mead": {
        "xatol": 1e-9,
        "fatol": 1e-12,
        "maxiter": 4000,
    },
}

# Monte Carlo configuration
SIMULATION_CONFIG = {
    "trials": int(os.getenv("FEEDCAP_TRIALS", "10000")),
    "horizon": 27,
    "epsilon": 0.2,
    "seed": int(os.getenv("FEEDCAP_SEED", "2024")),
    "budget": float(os.getenv("FEEDCAP_SIM_BUDGET", "2e8")),
    "chunk_size": 2000,
    "gains": "steady",
}

# Execution configuration
EXECUTION_CONFIG = {
    "threads": int(os.getenv("FEEDCAP_THREADS", "1")),
}

# Worked example reference values
EXAMPLE_CONFIG = {
    "channel_file": CHANNELS_DIR / "third_order.json",
    "rate": 1.0,
    "power": 0.743,
    "power_tol": 0.005,
    "a1": -0.887,
    "a1_tol": 0.01,
    "n_star": 1,
    "W": [-0.2, -0.7],
    "epsilon": 0.2,
    "horizon": 27,
    "analog_horizon": 500,
    "gains": "time_varying",
}

# Logging configuration
LOGGING_CONFIG = {
    "level": os.getenv("LOG_LEVEL", "INFO"),
    "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    "file": os.getenv("LOG_FILE", str(LOGS_DIR / "feedcap.log"))
}


def get_config(section: str) -> Dict[str, Any]:
    """
    Get configuration for a specific section.

    Args:
        section: Configuration section name

    Returns:
        Dictionary with configuration
    """
    configs = {
        "numerics": NUMERICS_CONFIG,
        "optimizer": OPTIMIZER_CONFIG,
        "simulation": SIMULATION_CONFIG,
        "execution": EXECUTION_CONFIG,
        "example": EXAMPLE_CONFIG,
        "logging": LOGGING_CONFIG,
    }

    return configs.get(section, {})


def validate_config() -> bool:
    """
    Validate configuration settings.

    Returns:
        True if configuration is valid
    """
    for key in ("tau_circ", "tau_syl", "riccati_tol", "rank_rel_threshold"):
        value = NUMERICS_CONFIG[key]
        if not 0 < value < 1:
            raise ValueError(f"{key} must be in (0, 1), got {value}")

    if NUMERICS_CONFIG["riccati_max_iter"] < 1:
        raise ValueError(
            f"riccati_max_iter must be positive, got {NUMERICS_CONFIG['riccati_max_iter']}"
        )

    if OPTIMIZER_CONFIG["restarts"] < 0:
        raise ValueError(f"restarts must be nonnegative, got {OPTIMIZER_CONFIG['restarts']}")

    low, high = OPTIMIZER_CONFIG["bracket"]
    if not 0 < low < high:
        raise ValueError(f"Rate bracket must satisfy 0 < low < high, got {(low, high)}")

    epsilon = SIMULATION_CONFIG["epsilon"]
    if not 0 < epsilon < 1:
        raise ValueError(f"Epsilon must be between 0 and 1, got {epsilon}")

    if SIMULATION_CONFIG["gains"] not in ("steady", "time_varying"):
        raise ValueError(f"Unknown gain schedule {SIMULATION_CONFIG['gains']!r}")

    if EXECUTION_CONFIG["threads"] < 1:
        raise ValueError(f"FEEDCAP_THREADS must be at least 1, got {EXECUTION_CONFIG['threads']}")

    return True


if __name__ == "__main__":
    print("Configuration Validation")
    print("=" * 60)

    try:
        validate_config()
        print("✓ Configuration valid")

        print(f"\nProject root: {PROJECT_ROOT}")
        print(f"Bundled channels: {CHANNELS_DIR}")
        print(f"Output directory: {OUTPUT_DIR}")

        print("\nOptimizer Configuration:")
        print(f"  Restarts: {OPTIMIZER_CONFIG['restarts']}")
        print(f"  Rate bracket: {OPTIMIZER_CONFIG['bracket']}")

        print("\nExecution Configuration:")
        print(f"  Threads: {EXECUTION_CONFIG['threads']}")

    except Exception as e:
        print(f"✗ Configuration error: {e}")
