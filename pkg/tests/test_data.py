import logging

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loadmdn.data import (FEATURE_NAMES, HALF_HOUR, HOUR, UKSMEC_SCHEMA, IngestError, LoadSeries, SupervisedSet,
                          build_features, calendar_indicators, describe, ingest_load_csv, pacf, resample_hourly,
                          split_chronological, split_sizes)


def _csv(tmp_path, rows, header="household_id,timestamp,kwh"):
    path = tmp_path / "in.csv"
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return path


def _hourly(values, start="2013-03-05T00:00"):
    values = np.asarray(values, dtype=float)
    ts = np.datetime64(start, "ns") + np.arange(len(values)) * HOUR
    return LoadSeries("h", ts, values, HOUR)


def test_feature_layout():
    assert len(FEATURE_NAMES) == 45
    assert FEATURE_NAMES[:2] == ("lag_24h", "lag_48h")
    assert FEATURE_NAMES[2] == "month_01" and FEATURE_NAMES[14] == "weekday_mon" and FEATURE_NAMES[-1] == "hour_23"


def test_ingest_filters_household(tmp_path):
    path = _csv(tmp_path, ["A,2013-01-01 00:00:00,0.1", "B,2013-01-01 00:00:00,0.2",
                           "A,2013-01-01 00:30:00,0.3", "B,2013-01-01 00:30:00,0.4"])
    s = ingest_load_csv(path, "A")
    assert len(s) == 2 and s.kwh.tolist() == [0.1, 0.3] and s.household_id == "A"
    with pytest.raises(IngestError, match="2 households"):
        ingest_load_csv(path)
    with pytest.raises(IngestError, match="no readings"):
        ingest_load_csv(path, "C")


def test_ingest_deduplicates_keeping_first(tmp_path, caplog):
    path = _csv(tmp_path, ["A,2013-01-01 00:00:00,0.1", "A,2013-01-01 00:00:00,0.9", "A,2013-01-01 00:30:00,0.3"])
    with caplog.at_level(logging.WARNING):
        s = ingest_load_csv(path)
    assert s.duplicates == 1 and s.kwh.tolist() == [0.1, 0.3]
    assert "1 duplicated" in caplog.text


def test_ingest_sorts(tmp_path):
    path = _csv(tmp_path, ["A,2013-01-01 01:00:00,0.3", "A,2013-01-01 00:00:00,0.1", "A,2013-01-01 00:30:00,0.2"])
    s = ingest_load_csv(path)
    assert np.all(np.diff(s.timestamps) > np.timedelta64(0, "ns"))
    assert s.kwh.tolist() == [0.1, 0.2, 0.3]


def test_ingest_errors(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.csv"):
        ingest_load_csv(tmp_path / "nope.csv")
    with pytest.raises(IngestError, match="missing columns"):
        ingest_load_csv(_csv(tmp_path, ["A,2013-01-01,0.1"], header="id,timestamp,kwh"))
    bad = _csv(tmp_path, ["A,2013-01-01 00:00:00,0.1", "A,not-a-time,0.2", "A,2013-01-01 01:00:00,abc"])
    with pytest.raises(IngestError, match="lines 3, 4"):
        ingest_load_csv(bad)
    assert len(ingest_load_csv(bad, skip_invalid=True)) == 1


def test_ingest_uksmec_schema(uksmec_csv):
    s = ingest_load_csv(uksmec_csv, "MAC000002", UKSMEC_SCHEMA)
    assert len(s) == 60 * 48 and s.cadence == HALF_HOUR and s.n_gaps == 0


def test_resample_examples():
    ts = np.datetime64("2013-01-01T00:00", "ns") + np.arange(4) * HALF_HOUR
    h = resample_hourly(LoadSeries("h", ts, np.array([0.3, 0.2, 0.1, 0.4])))
    np.testing.assert_allclose(h.kwh, [0.5, 0.5])
    assert h.cadence == HOUR

    gap = LoadSeries("h", ts[[0, 1, 3]], np.array([0.3, 0.2, 0.4]))
    h = resample_hourly(gap)
    assert np.isnan(h.kwh[1]) and h.n_gaps == 1

    day = np.datetime64("2013-01-01T00:00", "ns") + np.arange(48) * HALF_HOUR
    assert len(resample_hourly(LoadSeries("h", day, np.ones(48)))) == 24


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 5), min_size=2, max_size=60).filter(lambda v: len(v) % 2 == 0))
def test_resample_conserves_energy(values):
    ts = np.datetime64("2013-01-01T00:00", "ns") + np.arange(len(values)) * HALF_HOUR
    h = resample_hourly(LoadSeries("h", ts, np.array(values)))
    assert h.kwh.sum() == pytest.approx(sum(values), abs=1e-9)


def test_build_features_window_counts(caplog):
    assert len(build_features(_hourly(np.arange(49.0)))) == 1
    with caplog.at_level(logging.WARNING):
        assert len(build_features(_hourly(np.arange(48.0)))) == 0
    assert "need at least 49" in caplog.text
    assert len(build_features(_hourly(np.arange(200.0)))) == 152


def test_build_features_encoding_tuesday_march_10am():
    # 2013-03-05 is a Tuesday; 58 hours from 00:00 on Mar 3 reaches 10:00 on Mar 5
    s = _hourly(np.arange(59.0), start="2013-03-03T00:00")
    d = build_features(s)
    row = d.inputs[d.timestamps == np.datetime64("2013-03-05T10:00", "ns")][0]
    calendar = row[2:]
    assert np.flatnonzero(calendar[:12]).tolist() == [2]
    assert np.flatnonzero(calendar[12:19]).tolist() == [1]
    assert np.flatnonzero(calendar[19:]).tolist() == [10]
    assert row[0] == 58 - 24 and row[1] == 58 - 48


def test_build_features_is_causal_and_drops_gaps():
    y = np.arange(120.0)
    y[70] = np.nan
    d = build_features(_hourly(y))
    dropped = {70, 70 + 24, 70 + 48}
    hours = ((d.timestamps - d.timestamps[0]) // HOUR + 48).astype(int)
    assert dropped.isdisjoint(hours.tolist())
    assert len(d) == 72 - 3
    np.testing.assert_array_equal(d.inputs[:, 0], d.targets - 24)
    np.testing.assert_array_equal(d.inputs[:, 1], d.targets - 48)


def test_build_features_requires_hourly_grid():
    ts = np.datetime64("2013-01-01T00:00", "ns") + np.arange(60) * HALF_HOUR
    with pytest.raises(ValueError):
        build_features(LoadSeries("h", ts, np.ones(60)))


@pytest.mark.parametrize("n,sizes", [(100, (70, 15, 15)), (101, (71, 15, 15)), (1392, (976, 208, 208))])
def test_split_sizes(n, sizes):
    assert split_sizes(n) == sizes


def test_split_chronology_and_train_only_scalers():
    d = split_chronological(build_features(_hourly(np.random.default_rng(0).gamma(2, 0.2, 300))))
    tr, va, te = (d.timestamps[d.mask(t)] for t in ("train", "val", "test"))
    assert tr.max() < va.min() and va.max() < te.min()
    assert d.y_scaler.mean == pytest.approx(d.part("train").targets.mean(), rel=1e-15)
    xs, _ = d.standardized("train")
    np.testing.assert_allclose(xs.mean(axis=0), 0.0, atol=1e-12)
    with pytest.raises(ValueError):
        split_chronological(SupervisedSet.from_arrays(np.ones((3, 1)), np.ones(3)))


def test_describe_examples():
    s = describe(np.full(10, 0.7))
    assert (s.mean, s.std, s.q25, s.q50, s.q75) == (0.7, 0.0, 0.7, 0.7, 0.7)
    s = describe([1.0, 2.0, 3.0, 4.0])
    assert s.mean == 2.5 and s.q50 == 2.5 and s.std == pytest.approx(np.sqrt(1.25), abs=1e-15)
    assert describe(_hourly([1.0, np.nan, 3.0])).mean == 2.0


def _yule_walker_pacf(x, max_lag):
    """Independent oracle: last coefficient of each order-k Yule-Walker solve."""
    x = np.asarray(x, float) - np.mean(x)
    n = len(x)
    acov = np.array([x[: n - k] @ x[k:] / n for k in range(max_lag + 1)])
    out = [1.0]
    for k in range(1, max_lag + 1):
        R = np.array([[acov[abs(i - j)] for j in range(k)] for i in range(k)])
        out.append(np.linalg.solve(R, acov[1 : k + 1])[-1])
    return np.array(out)


def test_pacf_matches_yule_walker():
    x = np.random.default_rng(1).normal(size=500).cumsum() * 0.1 + np.random.default_rng(2).normal(size=500)
    np.testing.assert_allclose(pacf(x, 20), _yule_walker_pacf(x, 20), atol=1e-9)


def test_pacf_examples():
    rng = np.random.default_rng(0)
    wn = rng.standard_normal(10_000)
    p = pacf(wn, 40)
    assert p[0] == 1.0
    assert np.mean(np.abs(p[1:]) < 3 / np.sqrt(10_000)) >= 0.95
    ar = np.zeros(10_000)
    e = rng.standard_normal(10_000)
    for t in range(1, 10_000):
        ar[t] = 0.8 * ar[t - 1] + e[t]
    p = pacf(ar, 5)
    assert p[1] == pytest.approx(0.8, abs=0.05) and p[2] == pytest.approx(0.0, abs=0.05)


def test_pacf_errors():
    with pytest.raises(ValueError):
        pacf(np.ones(100), 5)
    with pytest.raises(ValueError):
        pacf(np.arange(5.0), 4)


def test_calendar_indicators_one_hot():
    ts = pd.date_range("2013-01-01", periods=24 * 40, freq="h").to_numpy()
    c = calendar_indicators(ts)
    np.testing.assert_array_equal(c[:, :12].sum(1), 1)
    np.testing.assert_array_equal(c[:, 12:19].sum(1), 1)
    np.testing.assert_array_equal(c[:, 19:].sum(1), 1)
