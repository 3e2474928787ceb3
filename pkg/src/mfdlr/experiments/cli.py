"""Command-line entry point: ``mfdlr <subcommand> --config cfg.json --seed 42 --out path``.

Failures exit with status 1 and print one JSON object on stderr, e.g.
``{"error": "FormatError", "message": "..."}``.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import runner
from .config import VARIANTS, ExperimentConfig, load_config
from .pipeline import TrainedModel, evaluate


def _floats(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _names(text: str) -> List[str]:
    names = [v.strip() for v in text.split(",") if v.strip()]
    bad = [n for n in names if n not in VARIANTS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown variants {bad}; choose from {sorted(VARIANTS)}")
    return names


def _protocols(text: str) -> List[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfdlr", description="Matched-filter delay-loop reservoir emitter identification.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, data=True):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="config JSON or dataset manifest")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", type=Path, required=True)
        if data:
            p.add_argument("--data", type=Path, required=True, help="directory written by 'generate'")
        return p

    add("generate", "simulate emitters and write dataset splits plus manifest", data=False)

    p = add("train", "train one model and save it")
    p.add_argument("--variant", type=_names, default=None, help="one of " + ", ".join(VARIANTS))
    p.add_argument("--train-channel", type=int, default=None)

    p = add("eval-matrix", "accuracy for every (train T_i, test T_j) pair")
    p.add_argument("--model", type=Path, help="evaluate this saved model instead of training")
    p.add_argument("--variants", type=_names, default=["mf_dlr", "mf_rr"])
    p.add_argument("--train-channels", type=_ints, default=list(range(5)))
    p.add_argument("--test-channels", type=_ints, default=list(range(5)))
    p.add_argument("--protocols", type=_protocols, default=["matched"])

    p = add("sweep-jsr", "accuracy against jamming-to-signal ratio")
    p.add_argument("--variants", type=_names, default=["mf_dlr", "mf_rr"])
    p.add_argument("--jsr", type=_floats, default=None, help="comma list in dB, e.g. --jsr=-inf,-10,0")
    p.add_argument("--protocols", type=_protocols, default=["matched"])

    p = add("fom", "memory, training MACs, latency and accuracy per variant")
    p.add_argument("--variants", type=_names, default=list(VARIANTS))

    p = add("calibrate", "grid-search the loop gains on the validation split")
    p.add_argument("--etas", type=_floats, default=[0.5, 0.7, 0.9, 1.0])
    p.add_argument("--nus", type=_floats, default=[0.1, 0.3, 0.5])
    p.add_argument("--h1s", type=_floats, default=[0.25, 0.5, 1.0])
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True, default=float))


def run(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = _config(args)
    cmd = args.command
    if cmd == "generate":
        manifest = runner.generate(cfg, args.out)
        _emit({"out": str(args.out), "files": manifest["files"]})
    elif cmd == "train":
        if args.variant:
            cfg = cfg.with_variant(args.variant[0])
        if args.train_channel is not None:
            cfg = replace(cfg, train_impairment=args.train_channel)
        model = runner.train(cfg, args.data, args.out)
        _emit({"out": str(args.out), "variant": cfg.variant, "train_seconds": model.train_seconds,
               "entropy_threshold": model.bank.entropy_threshold if model.bank else None})
    elif cmd == "eval-matrix":
        if args.model:
            model = TrainedModel.load(args.model)
            test = runner.load_split(args.data, "test", model.cfg)
            rows = []
            for j in args.test_channels:
                protocols = args.protocols if model.cfg.mf_enabled else ["matched"]
                acc, n = evaluate(model, test, j, protocols)
                for prot, a in acc.items():
                    rows.append({"train_channel": model.cfg.train_impairment, "test_channel": j,
                                 "variant": runner._variant_name(model.cfg.variant, prot),
                                 "accuracy": a, "n_eval": n, "seed": model.cfg.seed})
        else:
            rows = runner.eval_matrix(cfg, args.data, args.train_channels, args.test_channels,
                                      args.variants, args.protocols)
        runner.write_csv(rows, runner.MATRIX_FIELDS, args.out)
        _emit({"out": str(args.out), "rows": len(rows)})
    elif cmd == "sweep-jsr":
        rows = runner.sweep_jsr(cfg, args.data, args.variants, args.jsr, args.protocols)
        runner.write_csv(rows, runner.JSR_FIELDS, args.out)
        _emit({"out": str(args.out), "rows": len(rows)})
    elif cmd == "fom":
        reports = runner.fom_rows(runner.fom(cfg, args.data, args.variants))
        Path(args.out).write_text(json.dumps(reports, indent=2, sort_keys=True))
        _emit({"out": str(args.out), "reports": reports})
    elif cmd == "calibrate":
        result = runner.calibrate(cfg, args.data, args.etas, args.nus, args.h1s)
        Path(args.out).write_text(json.dumps({"best": result.best, "table": result.table}, indent=2))
        _emit({"out": str(args.out), "best": result.best})
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    try:
        return run(argv)
    except SystemExit:
        raise
    except Exception as exc:  # surface every failure as one machine-readable line
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
