"""
src/__main__.py

Application entry point.  Invoked via:

    python -m src simulate --config run.json     # from the repository root
    kinetic-bgk compare --config run.json --seed 7
                                                 # after ``pip install .``

Subcommands:

* ``simulate``            kac-cell, kac-ball or splitting particle run
* ``solve``               deterministic BGK solver
* ``compare``             splitting particles against the solver
* ``sweep``               convergence study over n, ε, τ and m
* ``microcanonical-test`` sampler and equivalence-of-ensembles report

Exit codes: 0 on success, 1 on a configuration or usage error, 2 on a
runtime error.  Errors are always written to stderr.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import NoReturn

from src.application.orchestrator import Orchestrator
from src.application.parallel import THREADS_ENV_VAR, default_workers
from src.domain.enums import RunMode
from src.infrastructure.config import ConfigLoadError, RunConfig
from src.infrastructure.logger import DEFAULT_LOG_DIR, get_logger, setup_logging
from src.infrastructure.repository import OutputRepository

# ``__name__`` is "__main__" under ``python -m src``, outside the package logger.
logger = get_logger("cli")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

_DEFAULT_OUT_DIR = Path("out")
_EFFECTIVE_CONFIG = "effective_config.json"

# Mode forced by each subcommand; ``simulate`` keeps the configured one.
_SUBCOMMAND_MODES: dict[str, RunMode | None] = {
    "simulate": None,
    "solve": RunMode.BGK_SOLVE,
    "compare": RunMode.COMPARE,
    "sweep": RunMode.SWEEP,
    "microcanonical-test": RunMode.MICROCANONICAL_TEST,
}


class _ArgumentParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with the config-error code."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer: {text}")
    return value


def _threads(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"thread count must be at least 1: {text}")
    return value


def _parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse command-line arguments for the harness.

    Args:
        argv: Argument list (defaults to ``sys.argv[1:]`` when ``None``).

    Returns:
        Parsed :class:`argparse.Namespace`.
    """
    common = _ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        metavar="PATH",
        type=Path,
        required=True,
        help="Run configuration (JSON or YAML)",
    )
    common.add_argument(
        "--seed",
        metavar="U64",
        type=_seed,
        default=None,
        help="Master seed; overrides the config",
    )
    common.add_argument(
        "--out",
        metavar="DIR",
        type=Path,
        default=_DEFAULT_OUT_DIR,
        help="Output directory (default: %(default)s)",
    )
    common.add_argument(
        "--threads",
        metavar="K",
        type=_threads,
        default=None,
        help=f"Worker threads (default: ${THREADS_ENV_VAR} or all cores); "
        "results do not depend on K",
    )
    common.add_argument(
        "--log-level",
        metavar="LEVEL",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        help="Logging verbosity (default: %(default)s)",
    )
    common.add_argument(
        "--log-dir",
        metavar="DIR",
        type=Path,
        default=DEFAULT_LOG_DIR,
        help="Directory of the rotating log file (default: %(default)s)",
    )

    parser = _ArgumentParser(
        prog="kinetic-bgk",
        description="Kac particle systems, splitting dynamics and a BGK reference solver.",
    )
    commands = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    commands.add_parser("simulate", parents=[common], help="Run a particle system")
    commands.add_parser("solve", parents=[common], help="Run the BGK solver")
    commands.add_parser("compare", parents=[common], help="Compare particles with the solver")
    commands.add_parser("sweep", parents=[common], help="Run a convergence study")
    commands.add_parser(
        "microcanonical-test", parents=[common], help="Check the microcanonical sampler"
    )
    return parser.parse_args(argv)


def _prepare(args: argparse.Namespace) -> RunConfig:
    """Load the config and apply the subcommand and CLI overrides."""
    config = RunConfig.load(args.config.expanduser())
    return config.with_overrides(
        seed=args.seed, threads=args.threads, mode=_SUBCOMMAND_MODES[args.command]
    )


def _run(args: argparse.Namespace, config: RunConfig) -> None:
    """Execute *config* and write every output under ``args.out``."""
    workers = config.threads if config.threads is not None else default_workers()
    with OutputRepository(args.out) as repository:
        # The thread count never changes results, so it is not echoed.
        RunConfig.save(
            dataclasses.replace(config, threads=None), repository.out_dir / _EFFECTIVE_CONFIG
        )
        logger.info(
            "%s: mode=%s seed=%d workers=%d out=%s",
            args.command,
            config.mode.value,
            config.seed,
            workers,
            repository.out_dir,
        )
        Orchestrator(config, repository, workers=workers).execute()


def main(argv: list[str] | None = None) -> int:
    """Parse arguments, run the requested subcommand and return its exit code.

    This is the console-script entry point registered in ``pyproject.toml``
    under ``[project.scripts]``.

    Args:
        argv: Optional argument list for programmatic invocation.  When
            ``None`` the process's ``sys.argv[1:]`` is used.
    """
    args = _parse_args(argv)
    setup_logging(log_dir=args.log_dir, level=args.log_level, console=True)

    try:
        config = _prepare(args)
    except ConfigLoadError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG

    try:
        _run(args, config)
    except ConfigLoadError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        logger.error("run failed: %s", exc, exc_info=True)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
