"""RMSE in normalized and physical units, persistence baseline, and the
stateless/stateful comparison table with its CSV emitters."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .data import GHI, MinMaxScaler, WindowedDataset
from .training import EpochRecord, MODES

COMPARE_HEADER = (
    "region", "month",
    "train_rmse_stateless", "train_rmse_stateful",
    "test_rmse_stateless", "test_rmse_stateful",
    "best_mode",
)
EPOCH_HEADER = ("epoch", "loss", "val_loss")
HOUR_GHI_HEADER = ("hour", "actual_ghi", "predicted_ghi")


def rmse(pred, actual) -> float:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    actual = np.asarray(actual, dtype=np.float64).ravel()
    if pred.size == 0:
        raise ValueError("rmse of empty vectors")
    if pred.size != actual.size:
        raise ValueError(f"rmse: length mismatch {pred.size} vs {actual.size}")
    d = pred - actual
    return float(np.sqrt(np.mean(d * d)))


def physical_rmse(pred_norm, actual_norm, scaler: MinMaxScaler, feature: int = GHI) -> float:
    """RMSE in W/m2: the normalized RMSE times the fitted GHI range."""
    span = float(scaler.data_range_[feature])
    if span <= 0.0:
        raise ValueError("degenerate GHI range in scaler")
    return rmse(pred_norm, actual_norm) * span


def persistence_baseline(ds: WindowedDataset) -> float:
    """Physical RMSE of forecasting each hour's GHI as the previous hour's."""
    if len(ds.targets) == 0:
        raise ValueError("empty dataset")
    last = ds.inputs[:, -1, GHI]
    return physical_rmse(last, ds.targets, ds.scaler)


@dataclass
class ExperimentReport:
    region: str
    month: str
    mode: str
    train_rmse_phys: float
    test_rmse_phys: float
    records: List[EpochRecord] = field(default_factory=list)
    config: Dict[str, object] = field(default_factory=dict)
    seed: int = 0
    baseline_rmse_phys: Optional[float] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.train_rmse_phys < 0 or self.test_rmse_phys < 0:
            raise ValueError("RMSE must be non-negative")


@dataclass
class CompareRow:
    region: str
    month: str
    train: Dict[str, Optional[float]]
    test: Dict[str, Optional[float]]
    best_mode: str


def compare_report(reports: Sequence[ExperimentReport]) -> List[CompareRow]:
    """One row per (region, month) in first-seen order.

    ``best_mode`` is the mode with the lowest test RMSE; ties go to
    stateless (the first column).
    """
    rows: Dict[tuple, CompareRow] = {}
    for rep in reports:
        key = (rep.region, rep.month)
        row = rows.get(key)
        if row is None:
            row = rows[key] = CompareRow(rep.region, rep.month, dict.fromkeys(MODES), dict.fromkeys(MODES), "")
        if row.test[rep.mode] is not None:
            raise ValueError(f"duplicate report for {rep.region}/{rep.month}/{rep.mode}")
        row.train[rep.mode] = rep.train_rmse_phys
        row.test[rep.mode] = rep.test_rmse_phys
    for row in rows.values():
        best = None
        for mode in MODES:
            value = row.test[mode]
            if value is not None and (best is None or value < row.test[best]):
                best = mode
        row.best_mode = best
    return list(rows.values())


def _fmt(value: Optional[float], digits: int) -> str:
    return "" if value is None else f"{value:.{digits}f}"


def write_compare_csv(rows: Sequence[CompareRow], stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(COMPARE_HEADER)
    for r in rows:
        w.writerow([r.region, r.month,
                    _fmt(r.train["stateless"], 2), _fmt(r.train["stateful"], 2),
                    _fmt(r.test["stateless"], 2), _fmt(r.test["stateful"], 2),
                    r.best_mode])


def write_epoch_csv(records: Sequence[EpochRecord], stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(EPOCH_HEADER)
    for rec in records:
        w.writerow([rec.epoch, f"{rec.loss:.6f}", f"{rec.val_loss:.6f}"])


def read_epoch_csv(stream) -> List[EpochRecord]:
    reader = csv.reader(stream)
    header = next(reader)
    if tuple(header) != EPOCH_HEADER:
        raise ValueError(f"unexpected epoch CSV header {header}")
    return [EpochRecord(int(e), float(l), float(v)) for e, l, v in reader]


def select_test_day(target_times: np.ndarray) -> Optional[np.ndarray]:
    """Indices of the first 24 consecutive targets starting at hour 0, or None."""
    times = np.asarray(target_times, dtype="datetime64[h]")
    hours = times.astype(np.int64) % 24
    for i in np.flatnonzero(hours == 0):
        if i + 24 <= len(times) and times[i + 23] - times[i] == np.timedelta64(23, "h"):
            return np.arange(i, i + 24)
    return None


def write_hour_ghi_csv(hours, actual, predicted, stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(HOUR_GHI_HEADER)
    for h, a, p in zip(hours, actual, predicted):
        w.writerow([int(h), f"{a:.2f}", f"{p:.2f}"])
