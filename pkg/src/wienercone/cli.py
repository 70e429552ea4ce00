"""Command-line batch front end.

Exit status: 0 on success, 2 for configuration errors, 3 for numerical
failures (including any block that failed its equilibrium solve).
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from . import __version__
from .config import OUT_ENV, config_from_dict, parse_config
from .errors import (
    ConditioningError,
    ConfigError,
    ConvergenceError,
    DomainError,
    RejectedPotentialError,
    UnsupportedConfigurationError,
    WienerConeError,
)
from .kernels import ORACLE
from .pipeline import (
    emit_report,
    run_boundary,
    run_eigen,
    run_oracle_compare,
    run_pipeline,
    run_profile,
    run_radial,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
COMMANDS = ("radial", "eigen", "classify", "profile", "boundary", "oracle-compare")

log = logging.getLogger("wienercone")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration (defaults apply when omitted)")
    common.add_argument("--out", metavar="DIR", help=f"output directory (default: config, then ${OUT_ENV}, then ./wienercone_out)")
    common.add_argument("--format", choices=("json", "csv", "both"), help="report formats (default: from config)")
    common.add_argument("--seed", type=int, help="seed for randomized sweeps (overrides config)")
    common.add_argument("--threads", type=int, default=1, metavar="N", help="worker threads for per-block solves")
    common.add_argument("--oracle", action="store_true", help="use the half-space oracle kernel / add the oracle comparison")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="wienercone", description="Wiener-type thinness tests on cones.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "radial": "solve the radial equation and tabulate V, W",
        "eigen": "first Dirichlet eigenpair of the base domain",
        "classify": "Wiener series at infinity for every configured set",
        "profile": "exceptional set and asymptotic profile of a superfunction",
        "boundary": "shrinking-neighbourhood test at a lateral boundary point",
        "oracle-compare": "envelope constants of the exact half-space Green function",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


def _load(args) -> "RunConfig":  # noqa: F821
    cfg = parse_config(args.config) if args.config else config_from_dict({}, "<defaults>")
    if args.oracle and args.command in ("boundary", "profile") and cfg.raw["kernel"]["mode"] != ORACLE:
        raw = dict(cfg.raw)
        raw["kernel"] = {**raw["kernel"], "mode": ORACLE}
        cfg = config_from_dict(raw, cfg.source)
    return cfg


def run(args) -> int:
    cfg = _load(args)
    if args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    if args.command == "classify":
        art = run_pipeline(cfg, threads=args.threads, oracle=args.oracle, seed=args.seed)
    elif args.command == "radial":
        art = run_radial(cfg)
    elif args.command == "eigen":
        art = run_eigen(cfg)
    elif args.command == "profile":
        art = run_profile(cfg)
    elif args.command == "boundary":
        art = run_boundary(cfg)
    else:
        art = run_oracle_compare(cfg, seed=args.seed)
    formats = ("json", "csv") if args.format == "both" else (args.format,) if args.format else cfg.formats
    for path in emit_report(art, cfg.output_dir(args.out), formats):
        print(path)
    if art.failed:
        log.error("some blocks failed; see the errors field of the report")
        return EXIT_NUMERIC
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return run(args)
    except (ConfigError, DomainError, UnsupportedConfigurationError, RejectedPotentialError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, ConditioningError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except WienerConeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
