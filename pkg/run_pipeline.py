"""
End-to-end run of the worked example.
Designs the optimal encoder for the bundled third-order channel, then runs
the digital and analog transmission experiments and writes a report.
"""

import sys
from pathlib import Path
import logging

# Add src to path
sys.path.append(str(Path(__file__).parent / "src"))

from feedcap.config import OUTPUT_DIR, SIMULATION_CONFIG, validate_config
from feedcap.pipeline import run_example
from feedcap.utils import setup_logging

logger = logging.getLogger(__name__)


def main():
    """Main execution."""
    import argparse

    parser = argparse.ArgumentParser(
        description="Run the feedback-capacity worked example"
    )
    parser.add_argument(
        "--trials",
        type=int,
        default=SIMULATION_CONFIG["trials"],
        help=f"Monte Carlo trials for the error-probability curve (default: {SIMULATION_CONFIG['trials']})"
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=SIMULATION_CONFIG["seed"],
        help="Monte Carlo seed"
    )
    parser.add_argument(
        "--out",
        default=str(OUTPUT_DIR / "example"),
        help="Output directory"
    )
    parser.add_argument(
        "--verbose",
        action="store_true",
        help="Debug logging"
    )

    args = parser.parse_args()
    setup_logging(verbose=args.verbose)
    validate_config()

    _, passed = run_example(out_dir=args.out, seed=args.seed, trials=args.trials)
    sys.exit(0 if passed else 3)


if __name__ == "__main__":
    main()
