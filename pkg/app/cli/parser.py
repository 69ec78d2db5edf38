"""
A module for parser in the app.cli package.
"""

import argparse
import logging
from pathlib import Path

from app.config.config import get_init_settings
from app.config.presets import RUN_PRESETS

COMMANDS: tuple[str, ...] = (
    "simulate",
    "estimate",
    "summarize",
    "counterfactual",
)


def _seed(value: str) -> int:
    seed: int = int(value)
    if not 0 <= seed < 2**64:
        raise argparse.ArgumentTypeError(f"{value} is not an unsigned 64-bit")
    return seed


def _positive(value: str) -> int:
    number: int = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f"{value} must be at least 1")
    return number


def _level(value: str) -> int:
    levels: dict[str, int] = logging.getLevelNamesMapping()
    if value.upper() not in levels:
        raise argparse.ArgumentTypeError(f"Unknown log level: {value}")
    return levels[value.upper()]


def build_parser() -> argparse.ArgumentParser:
    """
    Command line of the estimator

    :return: The parser
    :rtype: argparse.ArgumentParser
    """
    init_settings = get_init_settings()
    parser = argparse.ArgumentParser(
        prog=init_settings.PROJECT_NAME,
        description="Semiparametric Bayesian estimation of dynamic discrete"
        " choice models with Gumbel-mixture shocks",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument(
        "--config",
        required=True,
        help=f"TOML run configuration or a preset among"
        f" {', '.join(sorted(RUN_PRESETS))}",
    )
    parser.add_argument(
        "--data",
        type=Path,
        help="Directory of simulated or observed data (default <out>/data)",
    )
    parser.add_argument(
        "--out",
        type=Path,
        help="Run directory (default <output.directory>/<name>)",
    )
    parser.add_argument(
        "--store",
        type=Path,
        help="Directory of the chain stores (default <out>/estimate)",
    )
    parser.add_argument(
        "--seed",
        type=_seed,
        help="Overrides the seed of the configuration",
    )
    parser.add_argument(
        "--chains", type=_positive, default=1, help="Independent chains"
    )
    parser.add_argument(
        "--resume",
        action="store_true",
        help="Continue chains from their last checkpoint",
    )
    parser.add_argument(
        "--log-level", type=_level, default=None, help="Overrides LOG_LEVEL"
    )
    return parser
