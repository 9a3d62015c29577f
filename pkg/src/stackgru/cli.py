"""Command-line entry point: ``stackgru {synth,train,compare,evaluate}``.

Exit codes: 0 success, 1 runtime or numeric failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import data as dp
from .data import DataQualityError, SurfradParseError
from .experiment import (
    DatasetSpec,
    RunSpec,
    RunSpecError,
    execute,
    load_config,
    read_report_csv,
    read_scaler_csv,
    slug,
)
from .gru import load_checkpoint
from .metrics import physical_rmse
from .synthetic import synthesize
from .training import TrainingDivergedError, predict_windows

logger = logging.getLogger("stackgru")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value run configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--mode", choices=("stateless", "stateful", "both"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--window", type=int, help="window length in hours")
    p.add_argument("--hidden", type=int, help="hidden units per layer")
    p.add_argument("--layers", type=int, help="number of stacked GRU layers")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--workers", type=int, help="parallel (dataset, mode) runs")
    p.add_argument("--dataset", action="append", default=[], metavar="REGION,MONTH,SOURCE",
                   help="add a dataset; SOURCE is a CSV, .dat file/directory or synth:k=v,...")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stackgru", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_run_flags(sub.add_parser("train", help="train the configured (dataset, mode) cells"))
    _add_run_flags(sub.add_parser("compare", help="train both modes and emit comparison tables"))

    s = sub.add_parser("synth", help="write a synthetic hourly dataset as canonical CSV")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--name", default="synthetic", help="file stem")
    s.add_argument("--days", type=int, default=155)
    s.add_argument("--amplitude", type=float, default=800.0)
    s.add_argument("--noise", type=float, default=0.1)
    s.add_argument("--drift", type=float, default=0.1)
    s.add_argument("--start", default="2019-01-01")
    s.add_argument("--seed", type=int, default=0)

    e = sub.add_parser("evaluate", help="score a trained run on a dataset")
    e.add_argument("--run", required=True, help="run directory containing model.ckpt")
    e.add_argument("--data", required=True, help="canonical CSV or SURFRAD .dat file/directory")
    e.add_argument("--out", help="directory for evaluation.csv (default: stdout only)")
    return parser


def _spec_from_args(args) -> RunSpec:
    spec = RunSpec()
    if args.config:
        if not os.path.isfile(args.config):
            raise FileNotFoundError(f"config file not found: {args.config}")
        spec = load_config(args.config, spec)
    for entry in args.dataset:
        parts = [p.strip() for p in entry.split(",", 2)]
        if len(parts) != 3:
            raise RunSpecError(f"--dataset needs REGION,MONTH,SOURCE, got {entry!r}")
        spec.datasets.append(DatasetSpec(*parts))
    overrides = {
        "seed": args.seed, "out": args.out, "epochs": args.epochs, "window": args.window,
        "hidden": args.hidden, "layers": args.layers, "batch_size": args.batch_size,
        "learning_rate": args.learning_rate, "workers": args.workers,
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(spec, key, value)
    if args.mode:
        spec.modes = ("stateless", "stateful") if args.mode == "both" else (args.mode,)
    return spec


def cmd_train(args) -> int:
    spec = _spec_from_args(args)
    for rep in execute(spec, compare=False):
        print(f"{rep.region},{rep.month},{rep.mode},{rep.train_rmse_phys:.2f},{rep.test_rmse_phys:.2f}")
    return 0


def cmd_compare(args) -> int:
    spec = _spec_from_args(args)
    execute(spec, compare=True)
    with open(os.path.join(spec.out, "compare.csv"), encoding="utf-8") as f:
        sys.stdout.write(f.read())
    return 0


def cmd_synth(args) -> int:
    table = synthesize(args.days, args.amplitude, args.noise, args.drift, args.start, args.seed)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"{slug(args.name)}.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        dp.write_table_csv(table, f)
    print(path)
    return 0


def cmd_evaluate(args) -> int:
    for p in (args.run, args.data):
        if not os.path.exists(p):
            raise FileNotFoundError(f"path does not exist: {p}")
    stack = load_checkpoint(os.path.join(args.run, "model.ckpt"))
    scaler = read_scaler_csv(os.path.join(args.run, "scaler.csv"))
    info = read_report_csv(os.path.join(args.run, "report.csv"))
    window = int(info["config.window_len"])
    mode = info["mode"]
    table = dp.load_table(args.data)
    ds = dp.make_windows(table, window, scaler=scaler)
    pred = predict_windows(stack, ds.inputs, mode, int(info["config.batch_size"]))
    model_rmse = physical_rmse(pred, ds.targets, scaler)
    persist = physical_rmse(ds.inputs[:, -1, dp.GHI], ds.targets, scaler)
    text = f"mode,n_windows,rmse_phys,persistence_rmse_phys\n{mode},{len(ds)},{model_rmse:.2f},{persist:.2f}\n"
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "evaluation.csv"), "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    sys.stdout.write(text)
    return 0


COMMANDS = {"train": cmd_train, "compare": cmd_compare, "synth": cmd_synth, "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (FileNotFoundError, IsADirectoryError, PermissionError, RunSpecError) as exc:
        print(f"stackgru: error: {exc}", file=sys.stderr)
        return 2
    except (DataQualityError, SurfradParseError, TrainingDivergedError, ValueError, FloatingPointError) as exc:
        print(f"stackgru: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
