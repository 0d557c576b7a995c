"""Command-line entry points: `fedsim run` and `fedsim compare`."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiment import ConfigError, ExperimentConfig, compare_runs, run_experiment


def _parse_override(item: str) -> tuple[str, object]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _cmd_run(args: argparse.Namespace) -> int:
    raw = json.loads(Path(args.config).read_text())
    if not isinstance(raw, dict):
        raise ConfigError("config file must contain a JSON object")
    for item in args.set or []:
        key, value = _parse_override(item)
        raw[key] = value
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.workers is not None:
        raw["workers"] = args.workers
    if args.name is not None:
        raw["name"] = args.name
    if args.output_dir is not None:
        raw["output_dir"] = args.output_dir
    cfg = ExperimentConfig.from_dict(raw)
    out = run_experiment(cfg)
    summary = json.loads((out / "summary.json").read_text())
    print(f"wrote {out}")
    print(
        f"final accuracy {summary['final_accuracy']:.4f}, "
        f"total bytes {summary['total_bytes']}"
    )
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    report = compare_runs(args.dirs, args.target)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedsim",
        description="Deterministic federated-learning simulation experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment from a JSON config")
    run_p.add_argument("--config", required=True, help="path to the JSON config file")
    run_p.add_argument("--seed", type=int, help="override the config seed")
    run_p.add_argument("--workers", type=int, help="parallel client-training workers")
    run_p.add_argument("--name", help="override the run name")
    run_p.add_argument("--output-dir", help="override the output directory")
    run_p.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override any config field (value parsed as JSON, else string)",
    )
    run_p.set_defaults(func=_cmd_run)

    cmp_p = sub.add_parser("compare", help="compare finished runs against a target accuracy")
    cmp_p.add_argument("--target", type=float, required=True, help="target accuracy in (0, 1)")
    cmp_p.add_argument("dirs", nargs="+", help="run directories; first is the baseline")
    cmp_p.add_argument("--out", help="write the comparison JSON here instead of stdout")
    cmp_p.set_defaults(func=_cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
