"""Command-line entry point: ``l2nas <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .agent import CheckpointError
from .oracle import OracleError, import_nb201
from .space import SpaceError

log = logging.getLogger("l2nas")


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}")


def _common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", required=config_required, help="run config (JSON)")
    p.add_argument("--seed", type=_seeds, help="comma-separated seeds, e.g. 0,1,2")
    p.add_argument("--steps", type=int, help="search steps per seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--preset", choices=sorted(harness.PRESETS), help="agent preset")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="l2nas", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("run", help="run the agent for each seed"))
    _common(sub.add_parser("baseline-random", help="random-search baseline"))

    p = sub.add_parser("transfer", help="pretrain, fine-tune and fresh control")
    _common(p)
    p.add_argument("--finetune-config", required=True, help="config for the target environment")
    p.add_argument("--finetune-seed", type=_seeds, help="fine-tune seeds (paired with --seed)")

    p = sub.add_parser("enumerate", help="exact top-K listing of an enumerable space")
    _common(p)
    p.add_argument("-k", "--top-k", type=int, default=64)

    p = sub.add_parser("report", help="aggregate JSONL step logs")
    p.add_argument("logs", nargs="+")
    p.add_argument("--enumeration", help="cmd enumerate output for state deviation")
    p.add_argument("--out", help="write the report JSON here")

    p = sub.add_parser("import-nb201", help="convert an NB-201 export to a tabular file")
    p.add_argument("input", help="JSONL or CSV with arch, valid_acc, test_acc")
    p.add_argument("--out", required=True)
    p.add_argument("--dataset")
    p.add_argument("--acc-env", type=float)
    p.add_argument("--percent", action="store_true", help="accuracies are given in percent")
    return parser


def _load(args, path=None, seeds=None):
    return harness.load_config(path or args.config, preset=args.preset,
                               seeds=seeds if seeds is not None else args.seed,
                               steps=args.steps, out=args.out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            report = harness.cmd_run(_load(args))
            print(harness.format_table(report))
        elif args.command == "baseline-random":
            report = harness.cmd_baseline_random(_load(args))
            print(harness.format_table(report))
        elif args.command == "transfer":
            pre = _load(args)
            ft = harness.load_config(args.finetune_config, seeds=args.finetune_seed,
                                     out=args.out or pre["out"])
            report = harness.cmd_transfer(pre, ft)
            print(json.dumps({k: v for k, v in report.items() if k != "pairs"}, indent=2))
        elif args.command == "enumerate":
            cfg = _load(args)
            path = Path(cfg["out"]) / f"top{args.top_k}.json"
            doc = harness.cmd_enumerate(cfg, args.top_k, path)
            print(f"wrote {len(doc['entries'])} entries to {path}")
        elif args.command == "report":
            report = harness.cmd_report(args.logs, enumeration=args.enumeration)
            if args.out:
                harness._write_json(args.out, report)
            print(harness.format_table(report))
            if "state_mad_mean" in report["summary"]:
                print(f"state MAD vs true top-K mean: {report['summary']['state_mad_mean']:.4f}")
        elif args.command == "import-nb201":
            n = import_nb201(args.input, args.out, dataset=args.dataset, percent=args.percent,
                             acc_env=args.acc_env)
            print(f"wrote {n} records to {args.out}")
    except (harness.ConfigError, OracleError, SpaceError, CheckpointError, ValueError, OSError) as e:
        print(f"l2nas {args.command}: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
