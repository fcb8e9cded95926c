"""Command line entry point: ``adaptive-bandits run|validate CONFIG``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, validate_config
from .errors import BudgetExceededError, InvalidArgumentError, NumericDomainError, ProtocolViolationError
from .runner import WORKERS_ENV, default_workers, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUN = 0, 2, 1


def _emit_error(kind: str, problems: list[dict], out_root: Path | None = None) -> None:
    payload = {"status": "error", "error_type": kind, "errors": problems}
    text = json.dumps(payload, indent=2)
    print(text, file=sys.stderr)
    if out_root is not None:
        try:
            out_root.mkdir(parents=True, exist_ok=True)
            (out_root / "error.json").write_text(text + "\n")
        except OSError:
            pass


def _validate(path) -> int:
    try:
        config = validate_config(path)
    except ConfigError as exc:
        _emit_error("config", [p.to_dict() for p in exc.problems])
        return EXIT_CONFIG
    json.dump({"status": "ok", "config": config.to_dict()}, sys.stdout, indent=2)
    print()
    return EXIT_OK


def _run(args) -> int:
    if args.validate_only:
        return _validate(args.config)
    try:
        config = validate_config(args.config)
    except ConfigError as exc:
        _emit_error("config", [p.to_dict() for p in exc.problems])
        return EXIT_CONFIG
    out_base = Path(args.out_dir) if args.out_dir else Path(config.base_dir) / config.output_dir
    try:
        summary = run_experiment(config, out_dir=out_base, workers=args.workers, plot=args.plot or None)
    except BudgetExceededError as exc:
        _emit_error("budget", [{"message": str(exc)}], out_base / config.name)
        return EXIT_RUN
    except (InvalidArgumentError, NumericDomainError, ProtocolViolationError) as exc:
        _emit_error(type(exc).__name__, [{"message": str(exc)}], out_base / config.name)
        return EXIT_RUN
    except OSError as exc:
        _emit_error("io", [{"message": f"{exc.filename or ''}: {exc.strerror or exc}"}])
        return EXIT_RUN
    for algo in summary["algorithms"]:
        key = "total_loss" if config.is_bco else "total_reward"
        stats = algo[key]
        line = f"{algo['label']:<24} {key} {stats['mean']:.2f} ± {stats['stderr']:.2f}"
        if "sa_regret" in algo:
            line += f"  sa_regret({algo['sa_regret']['mode']}) {algo['sa_regret']['mean']:.2f}"
        print(line)
    print(f"wrote {out_base / config.name}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaptive-bandits", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--out-dir", help="override the config's output_dir")
    run.add_argument(
        "--workers", type=int, default=None,
        help=f"parallel runs (default: ${WORKERS_ENV} or 1); results do not depend on it",
    )
    run.add_argument("--validate-only", action="store_true", help="check the config and exit")
    run.add_argument("--plot", action="store_true", help="also render moving-average figures")

    val = sub.add_parser("validate", help="check a config and echo its normalized form")
    val.add_argument("config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return _validate(args.config)
    if args.workers is None:
        args.workers = default_workers()
    return _run(args)


if __name__ == "__main__":
    sys.exit(main())
