"""End-to-end runs: extraction, optimization, training of both regimes,
result analysis and the final conclusion, plus run-spec parsing."""

from __future__ import annotations

import logging
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import data as dp
from .estimator import StackedGRURegressor
from .gru import save_checkpoint
from .metrics import (
    ExperimentReport,
    compare_report,
    persistence_baseline,
    physical_rmse,
    select_test_day,
    write_compare_csv,
    write_epoch_csv,
    write_hour_ghi_csv,
)
from .synthetic import synthesize
from .training import MODES, TrainConfig

logger = logging.getLogger(__name__)

STAGES = (
    "data set extraction",
    "data optimization",
    "neural networks",
    "result analysis",
    "conclusion",
)

# Data-handling choices, echoed into every report.
METHOD_NOTES = (
    ("split", "chronological; last 20% of hours are test targets"),
    ("scaling", "min-max to [0,1] fitted on training rows only"),
    ("aggregation", "hourly mean of usable sub-hourly samples"),
    ("gap_fill", "carry forward previous valid hour; leading gaps dropped"),
    ("validation", "zero initial hidden state in both modes"),
)


class RunSpecError(ValueError):
    """Invalid run configuration (usage error)."""


@dataclass
class DatasetSpec:
    region: str
    month: str
    source: str  # file/directory path, or "synth:key=value,..."

    @property
    def is_synthetic(self) -> bool:
        return self.source.startswith("synth:")

    def synth_params(self) -> Dict[str, str]:
        body = self.source[len("synth:"):]
        params = {}
        for item in filter(None, (p.strip() for p in body.split(","))):
            if "=" not in item:
                raise RunSpecError(f"bad synthetic parameter {item!r} in {self.source!r}")
            key, value = (s.strip() for s in item.split("=", 1))
            params[key] = value
        unknown = set(params) - {"days", "amplitude", "noise", "drift", "start", "seed"}
        if unknown:
            raise RunSpecError(f"unknown synthetic parameters {sorted(unknown)}")
        return params


@dataclass
class RunSpec:
    datasets: List[DatasetSpec] = field(default_factory=list)
    out: str = "results"
    seed: int = 0
    modes: Tuple[str, ...] = MODES
    epochs: int = 100
    window: int = 24
    hidden: int = 32
    layers: int = 2
    batch_size: int = 24
    learning_rate: float = 1e-3
    clip_norm: Optional[float] = 5.0
    train_fraction: float = 0.8
    workers: int = 1
    cyclic_hour: bool = False

    def train_config(self, mode: str) -> TrainConfig:
        return TrainConfig(mode=mode, window_len=self.window, batch_size=self.batch_size, epochs=self.epochs,
                           learning_rate=self.learning_rate, seed=self.seed, layers=self.layers,
                           hidden_dim=self.hidden, clip_norm=self.clip_norm)

    def validate(self) -> None:
        if not self.datasets:
            raise RunSpecError("no datasets configured")
        labels = [(d.region, d.month) for d in self.datasets]
        if len(set(labels)) != len(labels):
            raise RunSpecError("dataset (region, month) labels must be unique")
        for d in self.datasets:
            if d.is_synthetic:
                d.synth_params()
            elif not os.path.exists(d.source):
                raise FileNotFoundError(f"input path does not exist: {d.source}")
        for m in self.modes:
            if m not in MODES:
                raise RunSpecError(f"unknown mode {m!r}")
        if not 0.0 < self.train_fraction < 1.0:
            raise RunSpecError("train_fraction must lie in (0, 1)")
        self.train_config(self.modes[0])


_INT_KEYS = {"seed", "epochs", "window", "hidden", "layers", "batch_size", "workers"}
_FLOAT_KEYS = {"learning_rate", "train_fraction"}


def _set_option(spec: RunSpec, key: str, value: str) -> None:
    key = key.strip().lower().replace("-", "_")
    value = value.strip()
    try:
        if key == "dataset":
            parts = [p.strip() for p in value.split(",", 2)]
            if len(parts) != 3:
                raise RunSpecError(f"dataset entry needs 'region, month, source': {value!r}")
            spec.datasets.append(DatasetSpec(*parts))
        elif key == "mode":
            spec.modes = MODES if value == "both" else (value,)
        elif key == "out":
            spec.out = value
        elif key == "clip_norm":
            spec.clip_norm = None if value.lower() in ("none", "off", "0") else float(value)
        elif key == "cyclic_hour":
            spec.cyclic_hour = value.lower() in ("1", "true", "yes", "on")
        elif key in _INT_KEYS:
            setattr(spec, key, int(value))
        elif key in _FLOAT_KEYS:
            setattr(spec, key, float(value))
        else:
            raise RunSpecError(f"unknown config key {key!r}")
    except ValueError as exc:
        if isinstance(exc, RunSpecError):
            raise
        raise RunSpecError(f"bad value for {key}: {value!r}") from None


def parse_config(text: str, base_dir: str = ".", spec: Optional[RunSpec] = None) -> RunSpec:
    """Parse ``key = value`` lines; ``#`` starts a comment; ``dataset`` may repeat.

    Relative dataset paths are resolved against ``base_dir``.
    """
    spec = spec or RunSpec()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise RunSpecError(f"config line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        _set_option(spec, key, value)
    for d in spec.datasets:
        if not d.is_synthetic and not os.path.isabs(d.source):
            d.source = os.path.normpath(os.path.join(base_dir, d.source))
    return spec


def load_config(path: str, spec: Optional[RunSpec] = None) -> RunSpec:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read(), os.path.dirname(os.path.abspath(path)), spec)


def slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "-", label).strip("-") or "x"


def load_dataset(d: DatasetSpec, default_seed: int) -> dp.TimeSeriesTable:
    if d.is_synthetic:
        p = d.synth_params()
        return synthesize(
            days=int(p.get("days", 31)),
            amplitude=float(p.get("amplitude", 800.0)),
            noise=float(p.get("noise", 0.1)),
            drift=float(p.get("drift", 0.1)),
            start=p.get("start", "2019-01-01"),
            seed=int(p.get("seed", default_seed)),
            region=d.region, month=d.month,
        )
    return dp.load_table(d.source, d.region, d.month)


@dataclass
class CellResult:
    report: ExperimentReport
    model: StackedGRURegressor
    scaler: dp.MinMaxScaler
    day_hours: Optional[np.ndarray]
    day_actual: Optional[np.ndarray]
    day_pred: Optional[np.ndarray]


def run_cell(table: dp.TimeSeriesTable, mode: str, spec: RunSpec) -> CellResult:
    """Train one (region, month, mode) cell and score it in physical units."""
    cfg = spec.train_config(mode)
    train_ds, test_ds = dp.prepare(table, cfg.window_len, spec.train_fraction, spec.cyclic_hour)
    model = StackedGRURegressor(
        mode=mode, hidden_dim=cfg.hidden_dim, n_layers=cfg.layers, batch_size=cfg.batch_size,
        epochs=cfg.epochs, learning_rate=cfg.learning_rate, clip_norm=cfg.clip_norm,
        random_state=cfg.seed,
    )
    model.fit(train_ds.inputs, train_ds.targets, validation_data=(test_ds.inputs, test_ds.targets))
    train_pred = model.predict(train_ds.inputs)
    test_pred = model.predict(test_ds.inputs)
    scaler = train_ds.scaler
    report = ExperimentReport(
        region=table.region, month=table.month, mode=mode,
        train_rmse_phys=physical_rmse(train_pred, train_ds.targets, scaler),
        test_rmse_phys=physical_rmse(test_pred, test_ds.targets, scaler),
        records=list(model.history_), config=cfg.as_dict(), seed=cfg.seed,
        baseline_rmse_phys=persistence_baseline(test_ds),
    )
    day = select_test_day(test_ds.target_times)
    if day is None:
        hours = actual = pred = None
    else:
        hours = np.arange(24)
        actual = scaler.inverse_feature(test_ds.targets[day])
        pred = scaler.inverse_feature(test_pred[day])
    return CellResult(report, model, scaler, hours, actual, pred)


def _run_job(args):
    table, mode, spec = args
    return run_cell(table, mode, spec)


def write_report_csv(report: ExperimentReport, path: str) -> None:
    last = report.records[-1]
    rows = [
        ("region", report.region), ("month", report.month), ("mode", report.mode),
        ("seed", str(report.seed)),
        ("train_rmse_phys", f"{report.train_rmse_phys:.2f}"),
        ("test_rmse_phys", f"{report.test_rmse_phys:.2f}"),
        ("persistence_rmse_phys", f"{report.baseline_rmse_phys:.2f}"),
        ("final_loss", f"{last.loss:.6f}"), ("final_val_loss", f"{last.val_loss:.6f}"),
    ]
    rows += [(f"config.{k}", str(v)) for k, v in report.config.items()]
    rows += [(f"method.{k}", v) for k, v in METHOD_NOTES]
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("key,value\n")
        for k, v in rows:
            f.write(f"{k},{v}\n")


def read_report_csv(path: str) -> Dict[str, str]:
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != "key,value":
        raise ValueError(f"{path}: not a report file")
    return dict(line.split(",", 1) for line in lines[1:] if line)


def write_scaler_csv(scaler: dp.MinMaxScaler, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("feature,min,max\n")
        for name, lo, hi in zip(dp.FEATURES, scaler.data_min_, scaler.data_max_):
            f.write(f"{name},{float(lo)!r},{float(hi)!r}\n")


def read_scaler_csv(path: str) -> dp.MinMaxScaler:
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != "feature,min,max":
        raise ValueError(f"{path}: not a scaler file")
    rows = [line.split(",") for line in lines[1:] if line]
    if [r[0] for r in rows] != list(dp.FEATURES):
        raise ValueError(f"{path}: unexpected feature list")
    scaler = dp.MinMaxScaler()
    scaler.data_min_ = np.array([float(r[1]) for r in rows])
    scaler.data_max_ = np.array([float(r[2]) for r in rows])
    scaler.n_features_in_ = len(rows)
    return scaler


def cell_dir(out: str, region: str, month: str, mode: str) -> str:
    return os.path.join(out, "runs", f"{slug(region)}_{slug(month)}_{mode}")


def write_cell(out: str, res: CellResult) -> None:
    rep = res.report
    d = cell_dir(out, rep.region, rep.month, rep.mode)
    os.makedirs(d, exist_ok=True)
    save_checkpoint(res.model.stack_, os.path.join(d, "model.ckpt"))
    with open(os.path.join(d, "epochs.csv"), "w", encoding="utf-8", newline="\n") as f:
        write_epoch_csv(rep.records, f)
    write_report_csv(rep, os.path.join(d, "report.csv"))
    write_scaler_csv(res.scaler, os.path.join(d, "scaler.csv"))


def execute(spec: RunSpec, compare: bool = False) -> List[ExperimentReport]:
    """Run every (dataset, mode) cell of ``spec`` and write artifacts under ``spec.out``.

    Inputs are validated before anything is written, so a bad spec leaves
    no partial output behind.
    """
    spec.validate()
    if compare:
        spec.modes = MODES

    logger.info("stage: %s", STAGES[0])
    tables = [load_dataset(d, spec.seed) for d in spec.datasets]
    logger.info("stage: %s", STAGES[1])
    for t in tables:
        logger.info("  %s/%s: %d hourly rows", t.region, t.month, len(t))

    logger.info("stage: %s", STAGES[2])
    jobs = [(t, mode, spec) for t in tables for mode in spec.modes]
    if spec.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]

    logger.info("stage: %s", STAGES[3])
    os.makedirs(spec.out, exist_ok=True)
    for res in results:
        write_cell(spec.out, res)
    reports = [r.report for r in results]
    if compare:
        write_comparison(spec.out, results)

    logger.info("stage: %s", STAGES[4])
    for row in compare_report(reports):
        logger.info("  %s/%s: best mode %s", row.region, row.month, row.best_mode)
    return reports


def write_comparison(out: str, results: Sequence[CellResult]) -> None:
    rows = compare_report([r.report for r in results])
    with open(os.path.join(out, "compare.csv"), "w", encoding="utf-8", newline="\n") as f:
        write_compare_csv(rows, f)
    for res in results:
        rep = res.report
        stem = f"{slug(rep.region)}_{slug(rep.month)}_{rep.mode}"
        with open(os.path.join(out, f"loss_{stem}.csv"), "w", encoding="utf-8", newline="\n") as f:
            write_epoch_csv(rep.records, f)
        with open(os.path.join(out, f"hour_ghi_{stem}.csv"), "w", encoding="utf-8", newline="\n") as f:
            if res.day_hours is None:
                write_hour_ghi_csv([], [], [], f)
            else:
                write_hour_ghi_csv(res.day_hours, res.day_actual, res.day_pred, f)
