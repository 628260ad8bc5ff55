"""
Utility functions for the feedback-capacity toolkit.
"""

from pathlib import Path
from typing import Any, Dict, Union
import json
import logging

import numpy as np

from feedcap.config import LOGGING_CONFIG

logger = logging.getLogger(__name__)


def to_db(power: float) -> float:
    """
    Convert a power ratio to decibels.

    Args:
        power: Positive power value

    Returns:
        10 log10(power)
    """
    return float(10.0 * np.log10(power))


def from_db(value_db: float) -> float:
    """Convert decibels back to a power ratio."""
    return float(10.0 ** (value_db / 10.0))


def format_power(power: float, decimals: int = 3) -> str:
    """
    Format a power for display with its dB value.

    Args:
        power: Power value
        decimals: Number of decimal places

    Returns:
        Formatted string such as "0.743 (-1.290 dB)"
    """
    if power is None or not np.isfinite(power) or power <= 0:
        return "N/A"
    return f"{power:.{decimals}f} ({to_db(power):.{decimals}f} dB)"


def format_bits(rate: float, decimals: int = 4) -> str:
    """Format a rate in bits per channel use."""
    if rate is None or not np.isfinite(rate):
        return "N/A"
    return f"{rate:.{decimals}f} bits/use"


class _NumpyEncoder(json.JSONEncoder):
    def default(self, obj):
        if isinstance(obj, np.ndarray):
            if np.iscomplexobj(obj):
                return {"real": obj.real.tolist(), "imag": obj.imag.tolist()}
            return obj.tolist()
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, (complex, np.complexfloating)):
            return {"real": float(obj.real), "imag": float(obj.imag)}
        if isinstance(obj, Path):
            return str(obj)
        return super().default(obj)


def export_to_json(data: Dict[str, Any], output_path: Union[str, Path]) -> Path:
    """
    Export data to a JSON file, converting numpy values.

    Args:
        data: Dictionary to export
        output_path: Output file path

    Returns:
        Path of the written file
    """
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(output_path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, cls=_NumpyEncoder)

    logger.info(f"Exported data to {output_path}")
    return output_path


def load_from_json(input_path: Union[str, Path]) -> Dict[str, Any]:
    """
    Load data from JSON file.

    Args:
        input_path: Input file path

    Returns:
        Loaded data
    """
    with open(input_path, "r", encoding="utf-8") as f:
        data = json.load(f)

    logger.debug(f"Loaded data from {input_path}")
    return data


def setup_logging(verbose: bool = False, log_file: Union[str, Path, None] = None) -> None:
    """
    Configure root logging for entry points: one file handler and one console handler.

    Args:
        verbose: Log at DEBUG instead of the configured level
        log_file: Override for the log file path
    """
    log_file = Path(log_file or LOGGING_CONFIG["file"])
    log_file.parent.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        level=logging.DEBUG if verbose else LOGGING_CONFIG["level"],
        format=LOGGING_CONFIG["format"],
        handlers=[
            logging.FileHandler(log_file),
            logging.StreamHandler(),
        ],
        force=True,
    )
