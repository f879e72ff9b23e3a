"""Command-line interface: run scenarios, list them, validate configs.

Exit codes: 0 success; 2 configuration problems (bad keys or values, cutoff
too small for the requested amplitude, cost limit exceeded); 3 numerical
failures (integration diverged, pump calibration failed, state validation
failed).
"""

from __future__ import annotations

import argparse
import sys

from .errors import (
    CalibrationError,
    ConfigError,
    CostLimitError,
    CutoffError,
    IntegratorDivergedError,
    ValidationError,
)
from .experiments import (
    SCENARIOS,
    estimate_cost,
    parse_config_text,
    parse_value,
    resolve_config,
    run_sweep,
    serialize_config,
)

_CONFIG_EXITS = (ConfigError, CutoffError, CostLimitError)
_NUMERIC_EXITS = (IntegratorDivergedError, CalibrationError, ValidationError)


def _add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("scenario", nargs="?", default=None, help="scenario name")
    parser.add_argument("--config", metavar="FILE", help="flat key=value config file")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        dest="assignments",
        help="override one config key (repeatable)",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dopocluster",
        description="simulate cluster-state generation in coupled optical oscillators",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="run a scenario and write results")
    _add_config_arguments(run_parser)
    run_parser.add_argument("--out", metavar="DIR", help="output directory")
    run_parser.add_argument("--workers", type=int, metavar="N", help="process count")
    run_parser.add_argument(
        "--max-cost",
        type=float,
        metavar="C",
        help="abort if the estimated cost (dim^3 x steps) exceeds C",
    )

    commands.add_parser("list-scenarios", help="list scenario names")

    validate_parser = commands.add_parser(
        "validate", help="resolve a configuration without running it"
    )
    _add_config_arguments(validate_parser)

    return parser


def _parse_assignments(assignments: list) -> dict:
    overrides: dict = {}
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        key = key.strip()
        if key in overrides:
            raise ConfigError(f"--set given twice for {key!r}")
        overrides[key] = parse_value(key, value)
    return overrides


def _resolve_from_args(args) -> "object":
    file_values = None
    if args.config is not None:
        try:
            with open(args.config, "r", encoding="utf-8") as handle:
                text = handle.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        file_values = parse_config_text(text)
    overrides = _parse_assignments(args.assignments)
    if getattr(args, "out", None) is not None:
        overrides["out"] = args.out
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = int(args.workers)
    return resolve_config(args.scenario, file_values, overrides)


def _command_run(args) -> int:
    from .output import emit_all

    config = _resolve_from_args(args)
    result = run_sweep(config, max_cost=args.max_cost)
    paths = emit_all(result, config["out"])
    for path in paths:
        print(f"wrote {path}")
    if result.points:
        last = result.points[-1]
        print(
            f"[{result.scenario}] {len(result.points)} point(s), "
            f"last W = {last['W']:.6f}, wall {result.wall_time:.1f} s"
        )
    return 0


def _command_list() -> int:
    width = max(len(name) for name in SCENARIOS)
    for name, entry in SCENARIOS.items():
        print(f"{name:<{width}}  {entry['description']}")
    return 0


def _command_validate(args) -> int:
    config = _resolve_from_args(args)
    points, cost = estimate_cost(config)
    sys.stdout.write(serialize_config(config.values))
    print(f"# hash {config.hash}")
    print(f"# {points} grid point(s), estimated cost {cost:.3e}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _command_run(args)
        if args.command == "list-scenarios":
            return _command_list()
        return _command_validate(args)
    except _CONFIG_EXITS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _NUMERIC_EXITS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
