"""Command-line entry point.

Subcommands map one-to-one onto pipeline stages (``sample``, ``teach``,
``pseudolabel``, ``extract``, ``train``, ``eval``), plus ``run-all`` for a
full multi-seed run and ``report`` to re-emit result tables. All commands
take ``--config <json>``; ``--seed``, ``--mock``, ``--ablation`` and
``--out`` override the config file. ``ENCODER_URL`` and ``TEACHER_URL``
environment variables override backend endpoints.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .errors import BbclfError, StageError
from .harness import (
    Ablation,
    ReportFormat,
    RunConfig,
    RunContext,
    aggregate_runs,
    do_eval,
    do_extract,
    do_pseudolabel,
    do_sample,
    do_teach,
    do_train,
    emit_report,
    run_all,
    run_single,
)

STAGE_COMMANDS = {
    "sample": do_sample,
    "teach": do_teach,
    "pseudolabel": do_pseudolabel,
    "extract": do_extract,
    "train": do_train,
    "eval": do_eval,
}


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run config JSON file")
    common.add_argument("--seed", type=int, default=None, help="run seed")
    common.add_argument(
        "--mock", action="store_true", help="use in-process mock backends"
    )
    common.add_argument(
        "--ablation",
        choices=[a.value for a in Ablation],
        default=None,
        help="override the configured ablation mode",
    )
    common.add_argument("--out", default=None, help="output directory")

    parser = argparse.ArgumentParser(
        prog="bbclf",
        description="Few-shot text classification over black-box encoder APIs",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGE_COMMANDS:
        sub.add_parser(name, parents=[common], help=f"run the {name} stage")
    sub.add_parser(
        "run-all", parents=[common], help="run all seeds, aggregate, and report"
    )
    report = sub.add_parser(
        "report", parents=[common], help="emit a report from existing results"
    )
    report.add_argument(
        "--format",
        choices=[f.value for f in ReportFormat],
        default=ReportFormat.MARKDOWN.value,
    )
    return parser


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config)
    updates: dict = {}
    if args.mock:
        updates["mock"] = True
    if args.ablation:
        updates["ablation"] = Ablation(args.ablation)
    if args.out:
        updates["out_dir"] = args.out
    return dataclasses.replace(cfg, **updates) if updates else cfg


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        if args.command in STAGE_COMMANDS:
            if args.seed is None:
                print("error: stage commands require --seed", file=sys.stderr)
                return 2
            ctx = RunContext(cfg, args.seed)
            try:
                result = STAGE_COMMANDS[args.command](ctx)
            except Exception as exc:
                raise StageError(args.command, exc) from exc
            if args.command == "eval":
                print(f"accuracy: {result:.4f}")
            else:
                print(f"stage '{args.command}' complete: {ctx.run_dir}")
        elif args.command == "run-all":
            if args.seed is not None:
                acc = run_single(cfg, args.seed)
                print(f"seed {args.seed}: accuracy {acc:.4f}")
            else:
                report = run_all(cfg)
                for seed in cfg.seeds:
                    print(f"seed {seed}: accuracy {report.per_seed[seed]:.4f}")
                print(
                    f"{report.task} [{report.ablation}]: "
                    f"mean {report.mean:.4f} std {report.std:.4f}"
                )
        elif args.command == "report":
            report = aggregate_runs(cfg)
            fmt = ReportFormat(args.format)
            suffix = "csv" if fmt is ReportFormat.CSV else "md"
            path = (
                RunContext(cfg, cfg.seeds[0]).run_dir.parent / f"report.{suffix}"
            )
            text = emit_report([report], fmt, path)
            print(text, end="")
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BbclfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
