"""Command-line entry point.

    certaudit audit --config audit.yaml --out results/
    certaudit experiment anchor-aug --config exp1.yaml --seed 0 --out results/
    certaudit experiment aqc --config aqc.yaml --out results/
    certaudit verify --config verify.yaml --out results/

Exit codes: 0 success, 1 usage or configuration error, 2 protocol error or
an untruthful DS.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .errors import AuditError, ProtocolError, UntruthfulDSError
from .harness import (
    emit_report,
    load_config,
    run_anchor_aug_experiment,
    run_aqc_experiment,
    run_audit,
    run_verify,
    ExperimentConfig,
)

log = logging.getLogger("certaudit")

EXIT_OK, EXIT_USAGE, EXIT_PROTOCOL = 0, 1, 2

RUNNERS = {
    "audit": run_audit,
    "anchor-aug": run_anchor_aug_experiment,
    "aqc": run_aqc_experiment,
    "verify": run_verify,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", help="YAML file with experiment keys")
    p.add_argument("--seed", type=int, help="base seed (overrides the config)")
    p.add_argument("--out", default=None, help="output directory (overrides the config)")


def build_parser():
    parser = _Parser(prog="certaudit", description="Audit classifiers through explanation queries.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(sub.add_parser("audit", help="audit synthetic oracles"))
    _common(sub.add_parser("verify", help="check explanations and apply the post-flag policy"))
    exp = sub.add_parser("experiment", help="run an experiment")
    exp_sub = exp.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    _common(exp_sub.add_parser("anchor-aug", help="anchor augmentation error curves"))
    _common(exp_sub.add_parser("aqc", help="query counts of the threshold auditors per gap"))
    return parser


def _config(args, experiment) -> ExperimentConfig:
    over = {"experiment": experiment, "base_seed": args.seed, "out_dir": args.out}
    if args.config:
        return load_config(args.config, **over)
    return ExperimentConfig(**{k: v for k, v in over.items() if v is not None})


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    name = args.experiment if args.command == "experiment" else args.command
    try:
        cfg = _config(args, name)
        table = RUNNERS[name](cfg)
        os.makedirs(cfg.out_dir, exist_ok=True)
        base = os.path.join(cfg.out_dir, name)
        emit_report(table, "csv", base + ".csv")
        if name in ("anchor-aug", "aqc"):
            emit_report(table, "svg", base + ".svg", log_x=cfg.log_x, title=name)
        log.info("wrote %s.csv", base)
    except (ProtocolError, UntruthfulDSError) as exc:
        print(f"certaudit: protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (AuditError, OSError) as exc:
        print(f"certaudit: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(table.to_csv(), end="")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
