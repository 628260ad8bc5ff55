"""
Command-line front end.

Exit codes: 0 success, 1 usage error, 2 invalid input, 3 numerical failure.
"""

from pathlib import Path
from typing import List, Optional, Sequence
import argparse
import logging
import sys

import numpy as np
import pandas as pd

from feedcap.config import EXECUTION_CONFIG, OPTIMIZER_CONFIG, OUTPUT_DIR, SIMULATION_CONFIG
from feedcap.data.channel import ChannelModel, bundled_channel, load_channel
from feedcap.exceptions import HorizonError, NumericalError, ValidationError
from feedcap.models import capacity
from feedcap.models.capacity import EncoderDesign
from feedcap.simulation import monte_carlo
from feedcap.utils import export_to_json, format_bits, format_power, from_db, load_from_json, setup_logging
from feedcap import pipeline, verify

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number")
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {text}")
    return value


def parse_power_grid(text: str) -> List[float]:
    """
    Parse a dB grid: "start:stop:step" (inclusive) or a comma-separated list.

    Raises:
        argparse.ArgumentTypeError: on an empty or malformed grid
    """
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if step <= 0:
                raise ValueError
            grid = list(np.arange(start, stop + step / 2, step))
        else:
            grid = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed power grid {text!r}")
    if not grid:
        raise argparse.ArgumentTypeError("power grid is empty")
    return [round(float(x), 10) for x in grid]


def resolve_channel(spec: str) -> ChannelModel:
    """A channel JSON path, or the name of a bundled channel."""
    path = Path(spec)
    if path.exists():
        return load_channel(path)
    return bundled_channel(spec)


def cmd_design(args) -> int:
    channel = resolve_channel(args.channel)
    if args.rate is not None:
        design = capacity.power_for_rate(channel, args.rate, restarts=args.restarts, seed=args.seed)
    else:
        _, design = capacity.capacity_for_power(channel, args.power, restarts=args.restarts, seed=args.seed)

    path = export_to_json(design.to_dict(), Path(args.out) / "design.json")
    eigs = np.linalg.eigvals(design.A_star)
    print("Encoder design")
    print("=" * 60)
    print(f"  n*:          {design.n_star} ({design.branch} branch)")
    print(f"  eigenvalues: {', '.join(f'{e:.4f}' for e in eigs)}")
    print(f"  P_inf:       {format_power(design.power)}")
    print(f"  K_e:         {design.ke:.6f}")
    print(f"  rate:        {format_bits(design.rate)}")
    print(f"  written to   {path}")
    return EXIT_OK


def cmd_capacity_curve(args) -> int:
    channel = resolve_channel(args.channel)
    tol = OPTIMIZER_CONFIG["capacity_tol"]
    rows = []
    for power_db in args.power_grid:
        power = from_db(power_db)
        row = {
            "power_db": power_db,
            "power": power,
            "capacity": np.nan,
            "feedforward": np.nan,
            "feedback_ge_feedforward": False,
            "status": "ok",
        }
        try:
            row["feedforward"] = capacity.feedforward_capacity(channel, power)
            row["capacity"], _ = capacity.capacity_for_power(channel, power, restarts=args.restarts, seed=args.seed)
        except NumericalError as e:
            logger.warning(f"Grid point {power_db} dB failed: {e}")
            row["status"] = f"failed: {e}"
        else:
            row["feedback_ge_feedforward"] = bool(row["capacity"] >= row["feedforward"] - tol)
            if not row["feedback_ge_feedforward"]:
                logger.warning(
                    f"Feedback capacity {row['capacity']:.6f} below feedforward {row['feedforward']:.6f} "
                    f"at {power_db} dB"
                )
                row["status"] = "feedback below feedforward"
        rows.append(row)

    frame = pd.DataFrame(
        rows, columns=["power_db", "power", "capacity", "feedforward", "feedback_ge_feedforward", "status"]
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "capacity_curve.csv"
    frame.to_csv(path, index=False)
    print(frame.to_string(index=False))
    print(f"\nWritten to {path}")
    violated = frame["status"] == "feedback below feedforward"
    if violated.any():
        print(f"Feedback capacity fell below feedforward at {int(violated.sum())} grid point(s)", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_simulate(args) -> int:
    design = EncoderDesign.from_dict(load_from_json(args.design))
    cfg = monte_carlo.SimConfig(
        design=design,
        trials=args.trials,
        T=args.T,
        epsilon=args.epsilon,
        seed=args.seed,
        mode=args.mode,
        gains=args.gains,
        noise_scale=args.noise_scale,
        keep_traces=args.keep_traces,
    )
    try:
        result = monte_carlo.run(cfg)
    except HorizonError as e:
        print(f"Codebook error: {e}\nHint: increase --T or --epsilon", file=sys.stderr)
        raise
    paths = monte_carlo.export(result, args.out, prefix=args.mode)
    print(result.to_frame().to_string(index=False, max_rows=40))
    for name, path in paths.items():
        print(f"  {name}: {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    channel = resolve_channel(args.channel)
    table = verify.run_verification(channel, full=args.full, restarts=args.restarts, inject_fault=args.inject_fault)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    table.to_csv(out_dir / "verify.csv", index=False)
    print(table.to_string(index=False))
    failed = int((~table["passed"]).sum())
    print(f"\n{len(table) - failed}/{len(table)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_NUMERICAL


def cmd_example(args) -> int:
    report, passed = pipeline.run_example(
        out_dir=Path(args.out) / "example",
        seed=args.seed,
        trials=args.trials,
        restarts=args.restarts,
    )
    for row in report["comparison"]:
        mark = "✓" if row["passed"] else "✗"
        print(f"{mark} {row['quantity']:<20} {row['value']:.6g} (reference {row['reference']:.6g}, delta {row['delta']:+.3g})")
    return EXIT_OK if passed else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=str(OUTPUT_DIR), help="output directory")
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--threads", type=_positive_int, default=None,
                        help="worker threads (default: FEEDCAP_THREADS or 1)")
    common.add_argument("--verbose", action="store_true", help="debug logging")
    common.add_argument("--restarts", type=int, default=None, help="optimizer restarts per branch")

    parser = _Parser(prog="feedcap", description="Feedback capacity of Gaussian channels with memory")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("design", parents=[common], help="compute the capacity-achieving encoder")
    p.add_argument("--channel", default="third_order", help="channel JSON file or bundled name")
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--rate", type=_positive_float, help="target rate in bits per channel use")
    target.add_argument("--power", type=_positive_float, help="power budget")
    p.set_defaults(handler=cmd_design)

    p = sub.add_parser("capacity-curve", parents=[common], help="feedback and feedforward capacity over SNR")
    p.add_argument("--channel", default="third_order")
    p.add_argument("--power-grid", type=parse_power_grid, default=parse_power_grid("-5:20:5"),
                   help='dB grid, "start:stop:step" or comma list')
    p.set_defaults(handler=cmd_capacity_curve)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo transmission experiments")
    p.add_argument("--design", required=True, help="design JSON written by 'feedcap design'")
    p.add_argument("--mode", choices=monte_carlo.MODES, default="digital")
    p.add_argument("--trials", type=_positive_int, default=SIMULATION_CONFIG["trials"])
    p.add_argument("--T", type=int, default=SIMULATION_CONFIG["horizon"])
    p.add_argument("--epsilon", type=float, default=SIMULATION_CONFIG["epsilon"])
    p.add_argument("--gains", choices=("steady", "time_varying"), default=SIMULATION_CONFIG["gains"])
    p.add_argument("--noise-scale", type=float, default=1.0, help=argparse.SUPPRESS)
    p.add_argument("--keep-traces", type=int, default=1, help="analog traces written as CSV")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("verify", parents=[common], help="run the oracle suites")
    p.add_argument("--channel", default="third_order")
    depth = p.add_mutually_exclusive_group()
    depth.add_argument("--quick", dest="full", action="store_false", help="core invariants (default)")
    depth.add_argument("--full", dest="full", action="store_true", help="include optimizer cross-oracles")
    p.add_argument("--inject-fault", default=None, help=argparse.SUPPRESS)
    p.set_defaults(handler=cmd_verify, full=False)

    p = sub.add_parser("example", parents=[common], help="reproduce the worked example")
    p.add_argument("--trials", type=_positive_int, default=SIMULATION_CONFIG["trials"])
    p.set_defaults(handler=cmd_example)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging(verbose=args.verbose)
    if args.threads is not None:
        EXECUTION_CONFIG["threads"] = args.threads
    if args.seed is None and args.command == "simulate":
        args.seed = SIMULATION_CONFIG["seed"]

    try:
        return args.handler(args)
    except ValidationError as e:
        logger.error(f"Invalid input: {e}", exc_info=True)
        print(f"Validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}", exc_info=True)
        print(f"Numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
