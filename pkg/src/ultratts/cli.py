"""Command line interface.

One subcommand per pipeline stage plus ``run-all``, a synthetic corpus
generator, and a report merger. Stage subcommands operate on an existing run
directory (created by ``prepare`` or ``run-all``, which echo the resolved
config there). Exit code is 0 on success, 1 with a stage-tagged diagnostic
otherwise.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import metrics, pipeline, synthetic
from .config import SYSTEMS, read_config, write_config
from .errors import UltraTtsError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ultratts",
        description="Train and evaluate acoustic models from ultrasound and text inputs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, needs_config: bool) -> None:
        p.add_argument("--output", type=Path, required=True, help="run directory")
        p.add_argument("--config", type=Path, required=needs_config, help="experiment config file")
        p.add_argument("--system", choices=SYSTEMS, help="override the configured system")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--workers", type=int, help="override the configured worker count")

    for stage in pipeline.STAGES:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        add_common(p, needs_config=(stage == "prepare"))

    p = sub.add_parser("run-all", help="run every stage in order")
    add_common(p, needs_config=True)

    p = sub.add_parser("synth-corpus", help="generate a synthetic corpus and sample config")
    p.add_argument("--output", type=Path, required=True, help="corpus directory")
    p.add_argument("--utterances", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--drift", type=float, default=0.0,
                   help="grayscale offset applied to the last 15%% of the session")

    p = sub.add_parser("report", help="merge evaluation CSVs from run directories into tables")
    p.add_argument("runs", type=Path, nargs="+", help="run directories with evaluate/report.csv")
    p.add_argument("--output", type=Path, help="write tables here instead of stdout")
    return parser


def _resolve_config(args: argparse.Namespace):
    run = pipeline.RunPaths(args.output)
    if args.config is not None:
        cfg = read_config(args.config)
    else:
        cfg = pipeline.load_run_config(args.output)
    overrides = {}
    if args.system is not None:
        overrides["system"] = args.system
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        cfg = cfg.with_overrides(**overrides)
    return cfg, run


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth-corpus":
            # resolve so the emitted config carries absolute corpus paths
            layout = synthetic.generate_corpus(
                args.output.resolve(),
                n_utterances=args.utterances,
                seed=args.seed,
                drift_magnitude=args.drift,
            )
            from .config import ExperimentConfig

            cfg = ExperimentConfig(
                ultrasound_dir=layout.ultrasound_dir,
                label_dir=layout.label_dir,
                acoustic_dir=layout.acoustic_dir,
                question_file=layout.question_file,
            )
            write_config(cfg, layout.root / "experiment.cfg")
            print(f"corpus written to {layout.root}")
            return 0

        if args.command == "report":
            reports = []
            for run_dir in args.runs:
                reports.extend(metrics.read_report_csv(pipeline.RunPaths(run_dir).report_csv))
            text = metrics.render_tables(reports)
            if args.output:
                args.output.write_text(text)
            else:
                sys.stdout.write(text)
            return 0

        cfg, run = _resolve_config(args)
        if args.command == "run-all":
            pipeline.run_experiment(cfg, run.root)
            print(f"run complete: {run.root}")
            return 0

        # single stage on an existing (or fresh, for prepare) run directory
        run.root.mkdir(parents=True, exist_ok=True)
        if args.command == "prepare":
            write_config(cfg, run.config)
        pipeline.run_stage(args.command, cfg, run.root)
        print(f"stage {args.command} complete: {run.root}")
        return 0
    except UltraTtsError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
