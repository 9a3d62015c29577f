"""Seeded synthetic hourly weather/irradiance generator.

Clear-sky GHI follows ``amplitude * max(0, sin(pi * (hour - 6) / 12))``,
scaled by a slow seasonal drift and a day-to-day cloudiness index that
persists as an AR(1) process. Hour-scale noise is autocorrelated and only
present in daylight. The remaining channels are driven by the same sun
and cloud terms so that they carry information about GHI.
"""

from __future__ import annotations

from datetime import datetime

import numpy as np

from .data import FEATURES, MS_TO_KNOTS, TimeSeriesTable
from .numeric import RandomSource


def _parse_start(start) -> np.datetime64:
    if isinstance(start, str):
        start = datetime.strptime(start, "%Y-%m-%d")
    return np.datetime64(start, "h")


def synthesize(days: int, amplitude: float = 800.0, noise: float = 0.1, drift: float = 0.1,
               start="2019-01-01", seed: int = 0, region: str = "synthetic",
               month: str = "") -> TimeSeriesTable:
    """Generate ``days * 24`` hourly rows.

    ``noise`` is a fraction of ``amplitude``; with ``noise=0`` and
    ``drift=0`` every day is the bare clear-sky curve. ``drift`` is the
    relative amplitude of the annual seasonal swing, zero on the start day.
    """
    if days < 2:
        raise ValueError("days must be >= 2")
    rng = RandomSource(seed)
    n = days * 24
    hour = np.tile(np.arange(24, dtype=float), days)
    day = np.repeat(np.arange(days, dtype=float), 24)

    sun = np.sin(np.pi * (hour - 6.0) / 12.0)
    up = np.maximum(sun, 0.0)
    season = 1.0 + drift * np.sin(2.0 * np.pi * day / 365.0)

    # day-to-day cloudiness, AR(1) with unit stationary variance
    u = np.empty(days)
    draws = rng.normal(0.0, 1.0, days)
    u[0] = draws[0]
    for d in range(1, days):
        u[d] = 0.8 * u[d - 1] + 0.6 * draws[d]
    clear = np.clip(1.0 - 2.0 * noise * np.abs(u), 0.2, 1.0)
    clear_h = np.repeat(clear, 24)

    # hour-scale irradiance noise
    e = np.empty(n)
    draws = rng.normal(0.0, 1.0, n)
    e[0] = draws[0]
    for t in range(1, n):
        e[t] = 0.6 * e[t - 1] + 0.8 * draws[t]

    ghi = np.maximum(0.0, amplitude * season * clear_h * up + amplitude * noise * e * up)

    w = rng.normal(0.0, 1.0, (n, 4))
    temp = 22.0 + 6.0 * season * clear_h * np.sin(np.pi * (hour - 9.0) / 12.0) + 20.0 * noise * w[:, 0]
    pressure = 1010.0 + 4.0 * np.sin(2.0 * np.pi * day / 7.0) - 1.5 * np.sin(2.0 * np.pi * hour / 12.0) \
        + 10.0 * noise * w[:, 1]
    rh = np.clip(85.0 - 30.0 * up * clear_h + 8.0 * (1.0 - clear_h) * 10.0 + 40.0 * noise * w[:, 2], 5.0, 100.0)
    wind = np.maximum(0.0, 2.5 + 2.0 * up + 10.0 * noise * w[:, 3]) * MS_TO_KNOTS
    zenith = 90.0 - 65.0 * sun

    values = np.column_stack([hour, ghi, temp, pressure, rh, wind, zenith])
    assert values.shape[1] == len(FEATURES)
    stamps = _parse_start(start) + np.arange(n) * np.timedelta64(1, "h")
    return TimeSeriesTable(stamps.astype("datetime64[m]"), values, region, month)
