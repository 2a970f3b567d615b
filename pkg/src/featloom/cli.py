"""Command-line interface: init, run, report, eval."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import load_config
from .errors import FeatloomError
from .orchestrator import build_and_save_index, evaluate_on_dataset, render_report, run


def _apply_overrides(config, args) -> None:
    if getattr(args, "dataset", None):
        config.dataset = args.dataset
    if getattr(args, "run_dir", None):
        config.run_dir = args.run_dir
    if getattr(args, "iterations", None) is not None:
        config.iterations = args.iterations
    if getattr(args, "stride", None) is not None:
        config.stride = args.stride
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "provider", None):
        config.provider = args.provider
    if getattr(args, "replay_file", None):
        config.replay_file = args.replay_file
    if getattr(args, "corpus_dir", None):
        config.corpus_dir = args.corpus_dir


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="featloom", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_init = sub.add_parser("init", help="build the knowledge index from the corpus directory")
    p_init.add_argument("--config", required=True)
    p_init.add_argument("--corpus-dir", dest="corpus_dir")

    p_run = sub.add_parser("run", help="execute (or resume) a feature-generation run")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--dataset")
    p_run.add_argument("--run-dir", dest="run_dir")
    p_run.add_argument("--iterations", type=int)
    p_run.add_argument("--stride", type=int)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--provider", choices=["replay", "http"])
    p_run.add_argument("--replay-file", dest="replay_file")

    p_report = sub.add_parser("report", help="summarize a finished or partial run")
    p_report.add_argument("--run-dir", dest="run_dir", required=True)

    p_eval = sub.add_parser("eval", help="apply the best model and features to held-out data")
    p_eval.add_argument("--run-dir", dest="run_dir", required=True)
    p_eval.add_argument("--dataset", required=True)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "init":
            config = load_config(args.config)
            _apply_overrides(config, args)
            index = build_and_save_index(config)
            print(f"indexed {len(index)} chunk(s)")
        elif args.command == "run":
            config = load_config(args.config)
            _apply_overrides(config, args)
            state = run(config)
            best = state.core.best_auroc
            print(f"run finished: best validation AUROC {best:.4f}" if best is not None else "run finished")
        elif args.command == "report":
            print(render_report(args.run_dir), end="")
        elif args.command == "eval":
            result = evaluate_on_dataset(args.run_dir, args.dataset)
            print(json.dumps(result, indent=2, sort_keys=True))
    except FeatloomError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
