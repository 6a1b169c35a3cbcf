"""``srxbench`` command line: generate, tune, run, aggregate, report."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, ExperimentConfig
from .pipeline import cmd_generate, cmd_run, cmd_tune
from .report import EmptyRecordsError, cmd_aggregate, cmd_report


def _names(text: str | None) -> list[str] | None:
    return None if text is None else [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment file")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--workers", type=int, help="concurrent cells")
    common.add_argument("--repetitions", type=int,
                        help="repetitions for stochastic regressors")
    common.add_argument("--lambda", dest="lam", type=float, help="neighbourhood scale")
    common.add_argument("--output-dir", help="where data, records and tables go")
    common.add_argument("--datasets", help="comma-separated dataset names")
    common.add_argument("--regressors", help="comma-separated regressor ids")
    common.add_argument("--explainers", help="comma-separated explainer ids")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="srxbench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write train/test CSVs")
    sub.add_parser("tune", parents=[common], help="grid-search hyper-parameters")
    sub.add_parser("run", parents=[common], help="fit, explain and score every cell")
    sub.add_parser("aggregate", parents=[common], help="summarise run records")
    rep = sub.add_parser("report", parents=[common], help="print the summary tables")
    rep.add_argument("--out", help="also write the report to this file")
    return parser


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_yaml(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(master_seed=args.seed, workers=args.workers,
                              repetitions=args.repetitions, lam=args.lam,
                              output_dir=args.output_dir, datasets=_names(args.datasets),
                              regressors=_names(args.regressors),
                              explainers=_names(args.explainers))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        if args.command == "generate":
            for name, (tr, te) in cmd_generate(cfg).items():
                print(f"{name}: {tr} {te}")
        elif args.command == "tune":
            best = cmd_tune(cfg)
            for name, regs in best.items():
                for reg, entry in regs.items():
                    print(f"{name} {reg} {entry['hyper']}")
        elif args.command == "run":
            res = cmd_run(cfg)
            print(f"{res.records} records, {res.failures} failed cells -> {res.directory}")
            return 0 if res.ok else 1
        elif args.command == "aggregate":
            cmd_aggregate(cfg)
            print(f"tables written to {cfg.out / 'summary'}")
        elif args.command == "report":
            print(cmd_report(cfg.output_dir, args.out), end="")
    except (ConfigError, EmptyRecordsError, FileNotFoundError, KeyError) as exc:
        print(f"srxbench: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
