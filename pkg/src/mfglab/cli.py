"""``mfglab`` command line: one subcommand per experiment action."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ACTIONS, ExperimentPlan, parse_config, resolve_config
from .errors import ConfigError
from .runner import EXIT_CONFIG, EXIT_IO, run_plan

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfglab",
        description="Mean field game experiments on the flat torus.",
    )
    sub = parser.add_subparsers(dest="action", required=True, metavar="ACTION")
    for action in ACTIONS:
        sp = sub.add_parser(action, help=f"run the {action} experiment")
        sp.add_argument("--config", type=Path, help="JSON experiment config")
        sp.add_argument("--out", type=str, help="output directory (overrides output.dir)")
        sp.add_argument("--jobs", type=int, help="worker processes for sweep rows")
        sp.add_argument("--seed", type=int, help="random seed (unsigned 64-bit)")
        sp.add_argument("--format", choices=("csv", "json"), help="series format")
    return parser


def _plan_from_args(args) -> ExperimentPlan:
    if args.config is not None:
        plan = parse_config(args.config)
        if plan.action != args.action:
            raise ConfigError(
                f"config action {plan.action!r} does not match subcommand {args.action!r}",
                field="action",
            )
        raw = plan.to_dict()
    else:
        raw = {"action": args.action}
    if args.out is not None:
        raw.setdefault("output", {})["dir"] = args.out
    if args.format is not None:
        raw.setdefault("output", {})["format"] = args.format
    if args.jobs is not None:
        raw["jobs"] = args.jobs
    if args.seed is not None:
        raw["seed"] = args.seed
    return resolve_config(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        plan = _plan_from_args(args)
        manifest = run_plan(plan)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for err in manifest.errors:
        print(f"error: {err}", file=sys.stderr)
    print(json.dumps({"status": manifest.status, "out": plan.output["dir"],
                      "files": [f["path"] for f in manifest.files]}))
    return manifest.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
