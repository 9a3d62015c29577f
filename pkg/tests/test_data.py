import io
from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stackgru import data as dp
from stackgru.data import (
    FEATURES,
    GHI,
    MS_TO_KNOTS,
    SURFRAD_FIELDS,
    DataQualityError,
    MinMaxScaler,
    SurfradParseError,
    SurfradRecord,
    TimeSeriesTable,
    chrono_split,
    fit_scaler,
    format_surfrad,
    make_windows,
    optimize,
    parse_surfrad,
)
from stackgru.synthetic import synthesize

HEADER = "Bondville\n   40.05  -88.37  213 m version 1\n"


def _record(when: datetime, ghi=300.0, temp=20.0, rh=50.0, wind=2.0, pressure=990.0,
            zen=45.0, flags=None) -> SurfradRecord:
    values = [0.0] * len(SURFRAD_FIELDS)
    for name, v in (("dw_solar", ghi), ("temp", temp), ("rh", rh), ("windspd", wind), ("pressure", pressure),
                    ("direct_n", 500.0), ("diffuse", 100.0)):
        values[SURFRAD_FIELDS.index(name)] = v
    q = [0] * len(SURFRAD_FIELDS)
    for name, flag in (flags or {}).items():
        q[SURFRAD_FIELDS.index(name)] = flag
    jday = when.timetuple().tm_yday
    return SurfradRecord(when.year, jday, when.month, when.day, when.hour, when.minute,
                         when.hour + when.minute / 60.0, zen, tuple(values), tuple(q))


def _day_at_cadence(day: datetime, minutes: int, **kw):
    return [_record(day + timedelta(minutes=m), **kw) for m in range(0, 24 * 60, minutes)]


def test_parse_fixture(fixtures_dir):
    recs = parse_surfrad((fixtures_dir / "bon_fixture.dat").read_text())
    assert len(recs) == 3
    first = recs[0]
    assert (first.year, first.jday, first.month, first.day, first.hour, first.minute) == (2019, 182, 7, 1, 18, 0)
    assert first.ghi == 451.2 and not first.ghi_missing
    assert first.dni == 612.5 and first.dhi == 141.7
    assert (first.temperature, first.relative_humidity, first.wind_speed, first.pressure) == (27.4, 61.2, 3.4, 987.6)
    assert recs[1].ghi == -9999.9 and recs[1].ghi_missing
    assert not recs[2].usable("rh")


def test_parse_round_trip(fixtures_dir):
    recs = parse_surfrad((fixtures_dir / "bon_fixture.dat").read_text())
    text = format_surfrad(recs, "Bondville", "40.05 -88.37 213")
    assert parse_surfrad(text) == recs
    assert format_surfrad(parse_surfrad(text), "Bondville", "40.05 -88.37 213") == text


def test_parse_empty_and_truncated():
    assert parse_surfrad(HEADER) == []
    with pytest.raises(SurfradParseError):
        parse_surfrad("Bondville\n")
    with pytest.raises(SurfradParseError):
        parse_surfrad("")


def test_parse_malformed_row_reports_line(fixtures_dir):
    lines = (fixtures_dir / "bon_fixture.dat").read_text().splitlines()
    lines[3] = " ".join(lines[3].split()[:-1])
    with pytest.raises(SurfradParseError, match="line 4"):
        parse_surfrad("\n".join(lines))
    lines = (fixtures_dir / "bon_fixture.dat").read_text().splitlines()
    lines[2] = lines[2].replace("451.2", "abc")
    with pytest.raises(SurfradParseError, match="line 3"):
        parse_surfrad("\n".join(lines))


def test_optimize_fixture_hour(fixtures_dir):
    table = optimize(parse_surfrad((fixtures_dir / "bon_fixture.dat").read_text()))
    assert len(table) == 1
    row = dict(zip(FEATURES, table.values[0]))
    assert row["hour"] == 18.0
    assert row["ghi"] == pytest.approx((451.2 + 448.9) / 2)
    assert row["rh_pct"] == pytest.approx((61.2 + 61.3) / 2)  # flag-2 sample excluded
    assert row["pressure_hpa"] == pytest.approx((987.6 + 987.6 + 987.5) / 3)
    assert row["wind_knots"] == pytest.approx((3.4 + 3.6 + 3.2) / 3 * MS_TO_KNOTS)
    assert row["zenith_deg"] == pytest.approx((28.41 + 28.39 + 28.37) / 3)


def test_optimize_three_minute_day_gives_24_rows():
    recs = _day_at_cadence(datetime(2019, 1, 5), 3)
    assert len(recs) == 480
    table = optimize(recs)
    assert len(table) == 24
    np.testing.assert_array_equal(table.values[:, 0], np.arange(24))
    assert np.all(np.diff(table.timestamps) == np.timedelta64(60, "m"))


def test_optimize_clips_negative_ghi():
    table = optimize(_day_at_cadence(datetime(2019, 1, 5), 60, ghi=-2.1))
    np.testing.assert_array_equal(table.values[:, GHI], 0.0)


def test_optimize_drops_dni_dhi_and_converts_wind():
    table = optimize(_day_at_cadence(datetime(2019, 1, 5), 60, wind=10.0))
    assert table.values.shape[1] == 7
    np.testing.assert_allclose(table.values[:, FEATURES.index("wind_knots")], 10.0 * 3600 / 1852)
    assert MS_TO_KNOTS == pytest.approx(1.9438, abs=1e-4)


def test_optimize_carry_forward_and_leading_drop():
    day = datetime(2019, 1, 5)
    recs = _day_at_cadence(day, 60)
    recs = [r for r in recs if r.hour != 10]  # whole hour absent
    recs[0] = _record(day, flags={"temp": 1})  # leading hour lacks temperature
    recs[5] = _record(day + timedelta(hours=5), ghi=123.0)
    recs[6] = _record(day + timedelta(hours=6), ghi=-9999.9)
    table = optimize(recs)
    assert len(table) == 23  # hour 0 dropped, hour 10 filled
    assert table.timestamps[0] == np.datetime64("2019-01-05T01:00")
    by_hour = {int(h): row for h, row in zip(table.values[:, 0], table.values)}
    assert by_hour[6][GHI] == 123.0
    np.testing.assert_array_equal(by_hour[10], np.r_[10.0, by_hour[9][1:]])


def test_optimize_rejects_sparse_month():
    recs = _day_at_cadence(datetime(2019, 1, 5), 60)
    recs = [r if r.hour % 3 else _record(datetime(2019, 1, 5, r.hour), flags={"rh": 1}) for r in recs]
    recs = [r for r in recs if r.hour not in (1, 4)]
    with pytest.raises(DataQualityError):
        optimize(recs)


def test_month_row_counts_match_corpus_scale():
    month = [r for d in range(31) for r in _day_at_cadence(datetime(2019, 1, 1) + timedelta(days=d), 60)]
    table = optimize(month)
    assert len(table) == 744
    # five such station-months make the 3720-record corpus size
    assert 5 * len(table) == 3720


def test_canonical_csv_round_trip():
    table = synthesize(3, seed=2)
    text = dp.table_to_csv(table)
    assert text.splitlines()[0] == "timestamp,hour,ghi,temp_c,pressure_hpa,rh_pct,wind_knots,zenith_deg"
    assert text.splitlines()[1].startswith("2019-01-01T00:00,0.0,")
    back = dp.read_table_csv(io.StringIO(text))
    np.testing.assert_array_equal(back.values, table.values)
    np.testing.assert_array_equal(back.timestamps, table.timestamps)


def test_canonical_csv_bad_header():
    with pytest.raises(ValueError):
        dp.read_table_csv(io.StringIO("a,b\n1,2\n"))


def test_load_table_from_dat_directory(tmp_path):
    for d in range(2):
        day = datetime(2019, 3, 1) + timedelta(days=d)
        (tmp_path / f"bon19{60 + d:03d}.dat").write_text(format_surfrad(_day_at_cadence(day, 30), "Bondville", "x"))
    table = dp.load_table(str(tmp_path), "Bondville", "March")
    assert len(table) == 48 and table.region == "Bondville"


def test_table_rejects_unordered_timestamps():
    with pytest.raises(ValueError):
        TimeSeriesTable(np.array(["2019-01-01T01:00", "2019-01-01T00:00"], dtype="datetime64[m]"), np.zeros((2, 7)))


def test_scaler_basics():
    s = MinMaxScaler().fit(np.array([[0.0, 3.0], [10.0, 3.0]]))
    np.testing.assert_array_equal(s.transform(np.array([[5.0, 3.0]])), [[0.5, 0.0]])
    assert s.transform(np.array([[12.0, 9.0]]))[0, 0] == pytest.approx(1.2)  # no clipping
    assert s.transform(np.array([[12.0, 9.0]]))[0, 1] == 0.0  # constant feature


@settings(max_examples=100, deadline=None)
@given(st.floats(-1e4, 1e4), st.floats(-1e3, 1e3), st.floats(1e-3, 1e3))
def test_scaler_round_trip(value, lo, width):
    s = MinMaxScaler().fit(np.array([[lo], [lo + width]]))
    back = s.inverse_transform(s.transform(np.array([[value]])))[0, 0]
    assert abs(back - value) <= 1e-12 * max(1.0, abs(value), abs(lo) + width)


def test_scaler_fitted_on_train_only():
    table = synthesize(20, seed=0, drift=0.0)
    table.values[-30:, GHI] += 500.0  # test split exceeds the training range
    s = fit_scaler(table, 0.8, 24)
    train, test = chrono_split(table, 0.8, 24)
    np.testing.assert_array_equal(s.data_max_, train.values.max(axis=0))
    peeked = MinMaxScaler().fit(table.values)
    assert peeked.data_max_[GHI] > s.data_max_[GHI]
    assert s.transform(test.values)[:, GHI].max() > 1.0


def test_windows_boundary_count_and_alignment():
    table = synthesize(2, seed=1).slice(0, 25)
    ds = make_windows(table, 24)
    assert len(ds) == 1
    table = synthesize(3, seed=1)
    ds = make_windows(table, 24)
    scaled = ds.scaler.transform(table.values)
    for i in (0, 10, len(ds) - 1):
        assert ds.targets[i] == scaled[i + 24, GHI]
        np.testing.assert_array_equal(ds.inputs[i], scaled[i:i + 24])
        assert ds.target_times[i] == table.timestamps[i + 24]
        assert ds.target_times[i] - table.timestamps[i + 23] == np.timedelta64(60, "m")


def test_window_too_short():
    with pytest.raises(ValueError):
        make_windows(synthesize(2, seed=1).slice(0, 24), 24)


def test_split_counts_3720():
    # index arithmetic: 20% of 3720 hours = 744 test targets, plus 24 lead-in rows
    table = synthesize(155, seed=0)
    assert len(table) == 3720
    train, test = chrono_split(table, 0.8, 24)
    assert (len(train), len(test)) == (2952, 768)
    tr, te = dp.prepare(table, 24, 0.8)
    assert (len(tr), len(te)) == (2928, 744)
    assert train.timestamps[-1] < test.timestamps[0]
    assert not set(tr.target_times.tolist()) & set(te.target_times.tolist())
    for ds in (tr, te):
        assert np.all(np.isfinite(ds.inputs)) and np.all(ds.inputs > -9999)


def test_cyclic_hour_flag():
    table = synthesize(3, seed=1)
    ds = make_windows(table, 24, cyclic_hour=True)
    assert ds.n_features == 9
    h = table.values[5, 0]
    assert ds.inputs[0, 5, 7] == pytest.approx(np.sin(2 * np.pi * h / 24))
