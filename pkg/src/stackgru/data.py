"""SURFRAD ingest, hourly feature table, scaling, windowing and splitting.

SURFRAD daily files (``<stn><yy><jjj>.dat``) have two header lines (station
name; latitude, longitude, elevation) followed by whitespace-separated rows
of 48 fields::

    year jday month day hour min dt zen
    dw_solar qc uw_solar qc direct_n qc diffuse qc dw_ir qc dw_casetemp qc
    dw_dometemp qc uw_ir qc uw_casetemp qc uw_dometemp qc uvb qc par qc
    netsolar qc netir qc totalnet qc temp qc rh qc windspd qc winddir qc
    pressure qc

Missing values are written as -9999.9 and a QC flag of 0 means good. Files
for a station can be fetched from
``https://gml.noaa.gov/aftp/data/radiation/surfrad/<station>/<year>/``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

MISSING = -9999.9

SURFRAD_LEAD = ("year", "jday", "month", "day", "hour", "minute", "dt", "zen")
SURFRAD_FIELDS = (
    "dw_solar", "uw_solar", "direct_n", "diffuse", "dw_ir", "dw_casetemp",
    "dw_dometemp", "uw_ir", "uw_casetemp", "uw_dometemp", "uvb", "par",
    "netsolar", "netir", "totalnet", "temp", "rh", "windspd", "winddir",
    "pressure",
)
SURFRAD_NFIELDS = len(SURFRAD_LEAD) + 2 * len(SURFRAD_FIELDS)

MS_TO_KNOTS = 3600.0 / 1852.0

FEATURES = ("hour", "ghi", "temp_c", "pressure_hpa", "rh_pct", "wind_knots", "zenith_deg")
GHI = FEATURES.index("ghi")
CSV_HEADER = ("timestamp",) + FEATURES
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M"


class SurfradParseError(ValueError):
    """Malformed SURFRAD content; the message carries the line number."""


class DataQualityError(ValueError):
    """Too much missing data to build a usable hourly table."""


def _is_missing(value: float) -> bool:
    return value <= MISSING + 0.05


@dataclass(frozen=True)
class SurfradRecord:
    year: int
    jday: int
    month: int
    day: int
    hour: int
    minute: int
    dt: float
    zenith: float
    values: Tuple[float, ...]
    flags: Tuple[int, ...]

    def value(self, name: str) -> float:
        return self.values[SURFRAD_FIELDS.index(name)]

    def usable(self, name: str) -> bool:
        i = SURFRAD_FIELDS.index(name)
        return self.flags[i] == 0 and not _is_missing(self.values[i])

    @property
    def ghi(self) -> float:
        return self.value("dw_solar")

    @property
    def dni(self) -> float:
        return self.value("direct_n")

    @property
    def dhi(self) -> float:
        return self.value("diffuse")

    @property
    def temperature(self) -> float:
        return self.value("temp")

    @property
    def pressure(self) -> float:
        return self.value("pressure")

    @property
    def relative_humidity(self) -> float:
        return self.value("rh")

    @property
    def wind_speed(self) -> float:
        """Wind speed in m/s as recorded."""
        return self.value("windspd")

    @property
    def ghi_missing(self) -> bool:
        return not self.usable("dw_solar")

    @property
    def hour_start(self) -> datetime:
        return datetime(self.year, 1, 1) + timedelta(days=self.jday - 1, hours=self.hour)


def parse_surfrad(content: str) -> List[SurfradRecord]:
    """Parse the text of one SURFRAD daily file into records, one per row."""
    lines = content.splitlines()
    if len(lines) < 2:
        raise SurfradParseError("truncated file: expected station and location header lines")
    records = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != SURFRAD_NFIELDS:
            raise SurfradParseError(
                f"line {lineno}: expected {SURFRAD_NFIELDS} fields, found {len(parts)}"
            )
        try:
            lead = [int(p) for p in parts[:6]]
            dt, zen = float(parts[6]), float(parts[7])
            rest = parts[8:]
            values = tuple(float(v) for v in rest[0::2])
            flags = tuple(int(q) for q in rest[1::2])
        except ValueError as exc:
            raise SurfradParseError(f"line {lineno}: {exc}") from None
        if not 0 <= lead[4] < 24:
            raise SurfradParseError(f"line {lineno}: hour {lead[4]} out of range")
        records.append(SurfradRecord(*lead, dt, zen, values, flags))
    return records


def format_surfrad(records: Iterable[SurfradRecord], station: str = "", location: str = "") -> str:
    """Serialize records back to SURFRAD row layout (shortest round-trip floats)."""
    out = [station, location]
    for r in records:
        parts = [str(r.year), str(r.jday), str(r.month), str(r.day), str(r.hour), str(r.minute),
                 repr(r.dt), repr(r.zenith)]
        for v, q in zip(r.values, r.flags):
            parts += [repr(v), str(q)]
        out.append(" ".join(parts))
    return "\n".join(out) + "\n"


def read_surfrad(path) -> List[SurfradRecord]:
    with open(path, encoding="ascii", errors="replace") as f:
        return parse_surfrad(f.read())


@dataclass
class TimeSeriesTable:
    """Hourly feature rows in :data:`FEATURES` order, UTC timestamps."""

    timestamps: np.ndarray  # datetime64[m]
    values: np.ndarray      # (n, 7)
    region: str = ""
    month: str = ""

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype="datetime64[m]")
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1, len(FEATURES))
        if len(self.timestamps) != len(self.values):
            raise ValueError("timestamps and values differ in length")
        if len(self.timestamps) > 1 and not np.all(np.diff(self.timestamps) > np.timedelta64(0, "m")):
            raise ValueError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("table contains non-finite values")

    def __len__(self) -> int:
        return len(self.values)

    def slice(self, start: int, stop: int) -> "TimeSeriesTable":
        return TimeSeriesTable(self.timestamps[start:stop], self.values[start:stop], self.region, self.month)


def _fill_hourly(hours: np.ndarray, rows: np.ndarray, max_missing: float):
    """Reindex to a gapless hourly grid and carry values forward.

    ``rows`` may contain NaN for missing features. Leading rows that still
    lack a feature after the forward fill are dropped.
    """
    start, stop = hours.min(), hours.max()
    n = int((stop - start) / np.timedelta64(1, "h")) + 1
    grid = start + np.arange(n) * np.timedelta64(1, "h")
    full = np.full((n, rows.shape[1]), np.nan)
    pos = ((hours - start) / np.timedelta64(1, "h")).astype(int)
    full[pos] = rows
    missing = np.isnan(full).any(axis=1)
    frac = missing.mean()
    if frac > max_missing:
        raise DataQualityError(f"{frac:.1%} of hours have missing features (limit {max_missing:.0%})")
    for j in range(full.shape[1]):
        col = full[:, j]
        # leading NaNs survive because they index back to position 0
        idx = np.where(np.isnan(col), 0, np.arange(n))
        np.maximum.accumulate(idx, out=idx)
        full[:, j] = col[idx]
    keep = ~np.isnan(full).any(axis=1)
    first = int(np.argmax(keep)) if keep.any() else n
    return grid[first:], full[first:]


def optimize(records: Sequence[SurfradRecord], region: str = "", month: str = "",
             max_missing: float = 0.25) -> TimeSeriesTable:
    """Reduce raw SURFRAD records to the hourly 7-feature table.

    DNI and DHI are dropped. Each hour takes the mean of its usable
    sub-hourly samples per field. Negative GHI is clipped to zero, wind
    speed converted from m/s to knots. Missing hours are forward-filled
    from the previous valid hour.
    """
    if not records:
        raise DataQualityError("no records")
    sources = ("dw_solar", "temp", "pressure", "rh", "windspd")
    buckets: dict = {}
    for r in records:
        key = r.hour_start
        acc = buckets.setdefault(key, [[] for _ in range(len(sources) + 1)])
        for j, name in enumerate(sources):
            if r.usable(name):
                acc[j].append(r.value(name))
        if not _is_missing(r.zenith):
            acc[-1].append(r.zenith)

    keys = sorted(buckets)
    rows = np.full((len(keys), len(FEATURES)), np.nan)
    for i, key in enumerate(keys):
        means = [np.mean(v) if v else np.nan for v in buckets[key]]
        ghi, temp, pres, rh, wind, zen = means
        rows[i] = [key.hour, max(ghi, 0.0) if not np.isnan(ghi) else np.nan,
                   temp, pres, rh, wind * MS_TO_KNOTS, zen]
    hours = np.array(keys, dtype="datetime64[h]")
    grid, values = _fill_hourly(hours, rows, max_missing)
    # the hour column is a property of the grid, not a measurement
    values[:, 0] = (grid.astype("datetime64[h]").astype(np.int64) % 24).astype(float)
    if len(values) == 0:
        raise DataQualityError("no complete hours after gap filling")
    return TimeSeriesTable(grid.astype("datetime64[m]"), values, region, month)


def write_table_csv(table: TimeSeriesTable, stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for ts, row in zip(table.timestamps, table.values):
        stamp = ts.astype(datetime).strftime(TIMESTAMP_FORMAT)
        w.writerow([stamp] + [repr(float(v)) for v in row])


def table_to_csv(table: TimeSeriesTable) -> str:
    buf = io.StringIO()
    write_table_csv(table, buf)
    return buf.getvalue()


def read_table_csv(stream, region: str = "", month: str = "", max_missing: float = 0.25) -> TimeSeriesTable:
    """Read the canonical hourly CSV. Gaps are forward-filled like :func:`optimize`."""
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
        raise ValueError(f"expected CSV header {','.join(CSV_HEADER)}")
    stamps, rows = [], []
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(CSV_HEADER):
            raise ValueError(f"line {lineno}: expected {len(CSV_HEADER)} columns, found {len(rec)}")
        try:
            stamps.append(datetime.strptime(rec[0], TIMESTAMP_FORMAT))
            rows.append([float(v) for v in rec[1:]])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    if not rows:
        raise DataQualityError("CSV has no data rows")
    hours = np.array(stamps, dtype="datetime64[h]")
    values = np.array(rows)
    values[values <= MISSING + 0.05] = np.nan
    grid, values = _fill_hourly(hours, values, max_missing)
    return TimeSeriesTable(grid.astype("datetime64[m]"), values, region, month)


def load_table(path, region: str = "", month: str = "") -> TimeSeriesTable:
    """Load a canonical CSV, a SURFRAD ``.dat`` file, or a directory of them."""
    import os

    if os.path.isdir(path):
        names = sorted(n for n in os.listdir(path) if n.lower().endswith(".dat"))
        if not names:
            raise FileNotFoundError(f"no .dat files in {path}")
        records = []
        for n in names:
            records.extend(read_surfrad(os.path.join(path, n)))
        return optimize(records, region, month)
    if str(path).lower().endswith(".dat"):
        return optimize(read_surfrad(path), region, month)
    with open(path, newline="", encoding="utf-8") as f:
        return read_table_csv(f, region, month)


class MinMaxScaler(TransformerMixin, BaseEstimator):
    """Per-feature min-max scaling onto [0, 1] of the fitted range.

    Values outside the fitted range map outside [0, 1]; nothing is clipped.
    A constant feature maps to 0.0.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.data_min_ = X.min(axis=0)
        self.data_max_ = X.max(axis=0)
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def data_range_(self) -> np.ndarray:
        return self.data_max_ - self.data_min_

    def transform(self, X):
        check_is_fitted(self, "data_min_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        rng = self.data_range_
        const = rng == 0
        out = (X - self.data_min_) / np.where(const, 1.0, rng)
        out[:, const] = 0.0
        return out

    def inverse_transform(self, X):
        check_is_fitted(self, "data_min_")
        X = check_array(X, dtype=np.float64)
        return X * self.data_range_ + self.data_min_

    def inverse_feature(self, values, feature: int = GHI) -> np.ndarray:
        """Undo the scaling of a single feature column."""
        check_is_fitted(self, "data_min_")
        values = np.asarray(values, dtype=np.float64)
        return values * self.data_range_[feature] + self.data_min_[feature]


@dataclass
class WindowedDataset:
    inputs: np.ndarray       # (N, window_len, n_features), normalized
    targets: np.ndarray      # (N,), normalized next-hour GHI
    target_times: np.ndarray  # (N,) datetime64[m]
    scaler: MinMaxScaler
    window_len: int

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def n_features(self) -> int:
        return self.inputs.shape[2]


def n_test_rows(n_rows: int, train_fraction: float, window_len: int) -> int:
    """Rows in the test split: its forecast targets plus one window of lead-in.

    The test split holds ``n_rows - round(n_rows * train_fraction)`` forecast
    targets, so 20% of the hours are scored when ``train_fraction`` is 0.8.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n_targets = n_rows - int(round(n_rows * train_fraction))
    return n_targets + window_len


def chrono_split(table: TimeSeriesTable, train_fraction: float = 0.8, window_len: int = 24):
    """Split into disjoint chronological (train, test) tables.

    No row is shared, so no window of one split touches the other.
    """
    n_test = n_test_rows(len(table), train_fraction, window_len)
    n_train = len(table) - n_test
    if n_train < window_len + 1 or n_test < window_len + 1:
        raise ValueError(
            f"table of {len(table)} rows too short to split with window {window_len}"
        )
    return table.slice(0, n_train), table.slice(n_train, len(table))


def fit_scaler(table: TimeSeriesTable, train_fraction: float = 0.8, window_len: int = 24) -> MinMaxScaler:
    """Fit a scaler on the training split of ``table`` only."""
    train, _ = chrono_split(table, train_fraction, window_len)
    if len(train) == 0:
        raise ValueError("empty training slice")
    return MinMaxScaler().fit(train.values)


def _cyclic_hour(raw_hours: np.ndarray) -> np.ndarray:
    angle = 2.0 * math.pi * raw_hours / 24.0
    return np.stack([np.sin(angle), np.cos(angle)], axis=-1)


def make_windows(table: TimeSeriesTable, window_len: int = 24, horizon: int = 1,
                 scaler: Optional[MinMaxScaler] = None, cyclic_hour: bool = False) -> WindowedDataset:
    """Sliding windows of ``window_len`` rows, each paired with the next hour's GHI.

    With ``scaler=None`` a scaler is fitted on ``table`` itself. With
    ``cyclic_hour`` sin and cos of the hour angle are appended as two extra
    input columns (9 features instead of 7).
    """
    if horizon != 1:
        raise ValueError("only horizon=1 is supported")
    if window_len < 1:
        raise ValueError("window_len must be >= 1")
    n = len(table) - window_len
    if n < 1:
        raise ValueError(f"table of {len(table)} rows is too short for window {window_len}")
    if scaler is None:
        scaler = MinMaxScaler().fit(table.values)
    scaled = scaler.transform(table.values)
    if cyclic_hour:
        scaled = np.concatenate([scaled, _cyclic_hour(table.values[:, 0])], axis=1)
    idx = np.arange(n)[:, None] + np.arange(window_len)[None, :]
    inputs = scaled[idx]
    targets = scaled[window_len:, GHI].copy()
    return WindowedDataset(inputs, targets, table.timestamps[window_len:].copy(), scaler, window_len)


def prepare(table: TimeSeriesTable, window_len: int = 24, train_fraction: float = 0.8,
            cyclic_hour: bool = False):
    """Split, fit the scaler on train rows, and window both splits."""
    train_t, test_t = chrono_split(table, train_fraction, window_len)
    scaler = MinMaxScaler().fit(train_t.values)
    return (make_windows(train_t, window_len, scaler=scaler, cyclic_hour=cyclic_hour),
            make_windows(test_t, window_len, scaler=scaler, cyclic_hour=cyclic_hour))
