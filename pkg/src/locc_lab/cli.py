"""Command-line entry point: ``locc-lab run | sweep | formulas``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import report as rp


def _cmd_run(args) -> int:
    cfg = rp.load_config(args.config)
    out = rp.run(cfg, seed=args.seed, out=args.out)
    if args.out is None and cfg.out is None:
        print(out.to_json())
    return 0


def _cmd_sweep(args) -> int:
    cfg = rp.load_config(args.config)
    table = rp.sweep(cfg, args.param, rp.parse_grid(args.grid), jobs=args.jobs, out=args.out)
    if args.out is None:
        sys.stdout.write(table.to_csv())
    if args.table:
        print(table.to_text(), file=sys.stderr)
    for row in table.rows:
        if row.failed:
            print(f"row {args.param}={row.param} failed: {row.error}", file=sys.stderr)
    return 1 if table.failed else 0


def _cmd_formulas(args) -> int:
    try:
        params = json.loads(args.params)
    except json.JSONDecodeError as exc:
        raise rp.ConfigError(f"--params is not valid JSON: {exc.msg}") from None
    if not isinstance(params, dict):
        raise rp.ConfigError("--params must be a JSON object")
    value = rp.formula(args.protocol, params)
    print(json.dumps({"protocol": args.protocol, "formula_bits": value, "formula_ref": rp.formula_ref(args.protocol)}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="locc-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one configured protocol and emit its JSON report")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", type=Path, default=None, help="write the report here instead of stdout")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="vary one parameter and emit a CSV row per value")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--param", required=True)
    p.add_argument("--grid", required=True, help="comma-separated values")
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--table", action="store_true", help="also print the cost table to stderr")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("formulas", help="evaluate a closed-form cost")
    p.add_argument("--protocol", required=True)
    p.add_argument("--params", required=True, help="inline JSON object")
    p.set_defaults(func=_cmd_formulas)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except rp.ConfigError as exc:
        print(f"{getattr(args, 'config', '') or 'config'}: {exc}", file=sys.stderr)
        return 2
    except rp.InvariantFailure as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return 3
    except (KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
