"""Command-line entry point.

Stages are independently re-runnable against the same output directory:
`index`, `select`, `topics`, `evaluate`, `report`, or `run` for all of
them plus the manifest. `make-dataset` writes the bundled synthetic
mini-dataset for demos and tests.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .errors import QueryscopeError
from .pipeline import (
    RunConfig,
    build_runtime,
    emit_report,
    run_pipeline,
    stage_evaluate,
    stage_index,
    stage_select,
    stage_topics,
)
from .synthetic import MiniDatasetParams, generate_mini_dataset

logger = logging.getLogger(__name__)


def _add_config_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="run config JSON")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="base seed (overrides config)")
    parser.add_argument("--jobs", type=int, help="parallel tasks (overrides config)")


def _int_env(name: str) -> int | None:
    value = os.environ.get(name)
    return int(value) if value else None


def _load_config(args: argparse.Namespace) -> RunConfig:
    # precedence: CLI flag > QUERYSCOPE_* env var > config file
    out = args.out or os.environ.get("QUERYSCOPE_OUT")
    if out:
        # flag/env paths are relative to the caller's cwd, unlike config
        # entries which resolve against the config file location
        out = str(Path(out).resolve())
    overrides = {
        "out": out,
        "base_seed": args.seed if args.seed is not None else _int_env("QUERYSCOPE_SEED"),
        "jobs": args.jobs if args.jobs is not None else _int_env("QUERYSCOPE_JOBS"),
    }
    return RunConfig.load(args.config, overrides=overrides)


def _report_tasks(tasks) -> int:
    failed = [t for t in tasks if t.status != "ok"]
    for task in failed:
        print(f"FAILED {task.name}: {task.error}", file=sys.stderr)
    print(f"{len(tasks) - len(failed)}/{len(tasks)} tasks ok")
    return 1 if failed else 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="queryscope",
        description="Select query-relevant document subsets and evaluate the topics they produce.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("index", "build and persist the BM25 index"),
        ("select", "compute document selections for every query and strategy"),
        ("topics", "fit topic models over existing selections"),
        ("evaluate", "compute metric records, coverage matrices, and IR tables"),
        ("run", "run all stages and write the manifest"),
    ):
        stage = sub.add_parser(name, help=help_text)
        _add_config_options(stage)
        if name == "run":
            stage.add_argument("--plots", action="store_true",
                               help="also render scatter/heatmap images")

    report = sub.add_parser("report", help="aggregate tables and summary from a run directory")
    report.add_argument("run_dir", help="directory produced by earlier stages")
    report.add_argument("--plots", action="store_true",
                        help="also render scatter/heatmap images")

    dataset = sub.add_parser("make-dataset", help="generate the synthetic mini-dataset")
    dataset.add_argument("--out", required=True, help="directory for the dataset files")
    dataset.add_argument("--seed", type=int, default=42)
    dataset.add_argument("--docs", type=int, default=500)
    dataset.add_argument("--queries", type=int, default=2)
    dataset.add_argument("--dim", type=int, default=128)

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        if args.command == "make-dataset":
            params = MiniDatasetParams(
                n_docs=args.docs, n_queries=args.queries, dim=args.dim, seed=args.seed
            )
            paths = generate_mini_dataset(args.out, params)
            print(json.dumps(paths, indent=2))
            return 0

        if args.command == "report":
            tasks = emit_report(args.run_dir, plots=args.plots)
            return _report_tasks(tasks)

        config = _load_config(args)
        if args.command == "run":
            manifest = run_pipeline(config, plots=args.plots)
            failed = manifest.failed_tasks()
            for task in failed:
                print(f"FAILED {task.name}: {task.error}", file=sys.stderr)
            print(f"manifest: {config.out_dir / 'manifest.json'} "
                  f"({len(manifest.tasks) - len(failed)}/{len(manifest.tasks)} tasks ok)")
            return 1 if failed else 0

        runtime = build_runtime(config)
        if args.command == "index":
            path = stage_index(config, runtime)
            print(f"wrote {path}")
            return 0
        if args.command == "select":
            return _report_tasks(stage_select(config, runtime))
        if args.command == "topics":
            return _report_tasks(stage_topics(config, runtime))
        if args.command == "evaluate":
            return _report_tasks(stage_evaluate(config, runtime))
        raise AssertionError(f"unhandled command {args.command}")
    except QueryscopeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
