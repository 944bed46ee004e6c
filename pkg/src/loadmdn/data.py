"""Smart-meter ingestion, featurization and chronological splitting."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .scaling import Scaler, standardize

log = logging.getLogger(__name__)

HALF_HOUR = np.timedelta64(30, "m")
HOUR = np.timedelta64(60, "m")
LAGS = (24, 48)
WEEKDAYS = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")
FEATURE_NAMES = tuple(
    ["lag_24h", "lag_48h"]
    + [f"month_{m:02d}" for m in range(1, 13)]
    + [f"weekday_{d}" for d in WEEKDAYS]
    + [f"hour_{h:02d}" for h in range(24)]
)
N_FEATURES = len(FEATURE_NAMES)
SPLITS = ("train", "val", "test")

DEFAULT_SCHEMA = {"household": "household_id", "timestamp": "timestamp", "kwh": "kwh"}
# Column names of the London smart-meter (UK-SMEC) half-hourly export.
UKSMEC_SCHEMA = {"household": "LCLid", "timestamp": "DateTime", "kwh": "KWH/hh (per half hour)"}


class IngestError(ValueError):
    pass


@dataclass
class LoadSeries:
    """Time-ordered kWh readings of one household.

    On an hourly series produced by :func:`resample_hourly` the timestamps form
    a uniform grid and missing hours hold NaN.
    """

    household_id: str
    timestamps: np.ndarray
    kwh: np.ndarray
    cadence: np.timedelta64 = HALF_HOUR
    duplicates: int = 0

    def __len__(self) -> int:
        return len(self.kwh)

    @property
    def gaps(self) -> np.ndarray:
        """Boolean mask of readings that are missing (NaN) or preceded by a jump in the time grid."""
        mask = np.isnan(self.kwh)
        if len(self.timestamps) > 1:
            mask[1:] |= np.diff(self.timestamps) > self.cadence
        return mask

    @property
    def n_gaps(self) -> int:
        return int(self.gaps.sum())


@dataclass
class SupervisedSet:
    """Feature/target rows in raw units, with optional split tags and training-split scalers."""

    inputs: np.ndarray
    targets: np.ndarray
    timestamps: np.ndarray
    split: np.ndarray | None = None
    x_scaler: Scaler | None = None
    y_scaler: Scaler | None = None
    feature_names: list[str] = field(default_factory=lambda: list(FEATURE_NAMES))
    household_id: str = ""

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def n_features(self) -> int:
        return self.inputs.shape[1]

    @classmethod
    def from_arrays(cls, inputs, targets, timestamps=None, **kw) -> "SupervisedSet":
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim == 1:
            inputs = inputs[:, None]
        targets = np.asarray(targets, dtype=np.float64).reshape(-1)
        if timestamps is None:
            timestamps = np.datetime64("2000-01-01T00:00", "ns") + np.arange(len(targets)) * HOUR
        kw.setdefault("feature_names", [f"x{i}" for i in range(inputs.shape[1])])
        return cls(inputs, targets, np.asarray(timestamps, dtype="datetime64[ns]"), **kw)

    def mask(self, tag: str) -> np.ndarray:
        if self.split is None:
            raise ValueError("set has not been split")
        if tag not in SPLITS:
            raise ValueError(f"unknown split {tag!r}")
        return self.split == tag

    def part(self, tag: str) -> "SupervisedSet":
        m = self.mask(tag)
        return replace(self, inputs=self.inputs[m], targets=self.targets[m],
                       timestamps=self.timestamps[m], split=self.split[m])

    def standardized(self, tag: str | None = None) -> tuple[np.ndarray, np.ndarray]:
        if self.x_scaler is None or self.y_scaler is None:
            raise ValueError("set has no fitted scalers")
        d = self if tag is None else self.part(tag)
        return standardize(d.inputs, self.x_scaler), standardize(d.targets, self.y_scaler)


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    std: float
    q25: float
    q50: float
    q75: float

    def as_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "25%": self.q25, "50%": self.q50, "75%": self.q75}


def ingest_load_csv(path, household: str | None = None, schema: dict | None = None,
                    skip_invalid: bool = False) -> LoadSeries:
    """Read one household's readings from a ``household,timestamp,kwh`` CSV.

    Rows are sorted by time and repeated timestamps keep their first
    occurrence.  Unparseable timestamps or kWh values raise :class:`IngestError`
    listing the offending line numbers unless ``skip_invalid`` is set.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    frame.columns = [c.strip() for c in frame.columns]
    wanted = [schema["household"], schema["timestamp"], schema["kwh"]]
    missing = [c for c in wanted if c not in frame.columns]
    if missing:
        raise IngestError(f"{path}: missing columns {missing}; found {list(frame.columns)}")

    ids = frame[schema["household"]].str.strip()
    if household is None:
        uniq = ids.unique()
        if len(uniq) != 1:
            raise IngestError(f"{path}: {len(uniq)} households present, select one with household=")
        household = uniq[0]
    positions = np.flatnonzero((ids == household).to_numpy())
    rows = frame.iloc[positions]

    ts = pd.to_datetime(rows[schema["timestamp"]].str.strip(), errors="coerce", format="ISO8601")
    if getattr(ts.dt, "tz", None) is not None:
        ts = ts.dt.tz_convert("UTC").dt.tz_localize(None)
    kwh = pd.to_numeric(rows[schema["kwh"]].str.strip(), errors="coerce")
    bad = (ts.isna() | kwh.isna() | (kwh < 0)).to_numpy()
    if bad.any():
        lines = (positions[bad] + 2).tolist()  # header line, 1-based
        if not skip_invalid:
            shown = ", ".join(map(str, lines[:20])) + (" ..." if len(lines) > 20 else "")
            raise IngestError(f"{path}: {len(lines)} unparseable rows at lines {shown}")
        log.warning("%s: skipped %d invalid rows", path, len(lines))
    ts = ts[~bad].to_numpy(dtype="datetime64[ns]")
    kwh = kwh[~bad].to_numpy(dtype=np.float64)
    if len(kwh) == 0:
        raise IngestError(f"{path}: no readings for household {household!r}")

    order = np.argsort(ts, kind="stable")
    ts, kwh = ts[order], kwh[order]
    keep = np.ones(len(ts), dtype=bool)
    keep[1:] = ts[1:] != ts[:-1]
    duplicates = int((~keep).sum())
    if duplicates:
        log.warning("household %s: dropped %d duplicated timestamps", household, duplicates)
    series = LoadSeries(str(household), ts[keep], kwh[keep], HALF_HOUR, duplicates)
    if series.n_gaps:
        log.info("household %s: %d gaps in the half-hourly grid", household, series.n_gaps)
    return series


def resample_hourly(s: LoadSeries) -> LoadSeries:
    """Sum aligned half-hour pairs into hourly energy on a uniform grid; incomplete hours become NaN."""
    if len(s) == 0:
        return LoadSeries(s.household_id, s.timestamps[:0], s.kwh[:0], HOUR, s.duplicates)
    ts = s.timestamps.astype("datetime64[m]")
    start = ts[0].astype("datetime64[h]").astype("datetime64[m]")
    offsets = (ts - start) / HALF_HOUR
    if not np.all(offsets == np.round(offsets)):
        raise ValueError("readings are not aligned to a half-hourly grid")
    slot = offsets.astype(np.int64)
    n_hours = int(slot[-1] // 2) + 1
    grid = np.full(2 * n_hours, np.nan)
    grid[slot] = s.kwh
    hourly = grid.reshape(n_hours, 2).sum(axis=1)  # NaN propagates, marking gaps
    stamps = (start + np.arange(n_hours) * HOUR).astype("datetime64[ns]")
    return LoadSeries(s.household_id, stamps, hourly, HOUR, s.duplicates)


def calendar_indicators(timestamps) -> np.ndarray:
    """One-hot month (12), weekday (7, Monday first) and hour (24) columns."""
    idx = pd.DatetimeIndex(np.asarray(timestamps, dtype="datetime64[ns]"))
    n = len(idx)
    out = np.zeros((n, 43))
    rows = np.arange(n)
    out[rows, idx.month.to_numpy() - 1] = 1.0
    out[rows, 12 + idx.weekday.to_numpy()] = 1.0
    out[rows, 19 + idx.hour.to_numpy()] = 1.0
    return out


def build_features(s: LoadSeries) -> SupervisedSet:
    """Sliding-window rows ``[y(t-24), y(t-48), calendar(t)] -> y(t)`` on an hourly series.

    Rows touching a gap at t, t-24 or t-48 are dropped.
    """
    if s.cadence != HOUR:
        raise ValueError("build_features expects an hourly series")
    if len(s) > 1 and np.any(np.diff(s.timestamps) != HOUR):
        raise ValueError("hourly series must lie on a uniform grid; use resample_hourly")
    lag = max(LAGS)
    if len(s) <= lag:
        log.warning("household %s: %d hourly values, need at least %d", s.household_id, len(s), lag + 1)
        return SupervisedSet(np.zeros((0, N_FEATURES)), np.zeros(0), s.timestamps[:0],
                             household_id=s.household_id)
    y = s.kwh
    t = np.arange(lag, len(s))
    lagged = np.column_stack([y[t - k] for k in LAGS])
    ok = ~(np.isnan(y[t]) | np.isnan(lagged).any(axis=1))
    t = t[ok]
    inputs = np.hstack([lagged[ok], calendar_indicators(s.timestamps[t])])
    return SupervisedSet(inputs, y[t].copy(), s.timestamps[t].copy(), household_id=s.household_id)


def split_sizes(n: int, train: float = 0.70, val: float = 0.15, test: float = 0.15) -> tuple[int, int, int]:
    if abs(train + val + test - 1.0) > 1e-9 or min(train, val, test) < 0:
        raise ValueError(f"split fractions must be non-negative and sum to 1, got {(train, val, test)}")
    n_val = int(np.floor(val * n + 1e-9))
    n_test = int(np.floor(test * n + 1e-9))
    return n - n_val - n_test, n_val, n_test


def split_chronological(d: SupervisedSet, train: float = 0.70, val: float = 0.15,
                        test: float = 0.15) -> SupervisedSet:
    """Contiguous train -> val -> test blocks; scalers are fitted on the train block only."""
    n_train, n_val, n_test = split_sizes(len(d), train, val, test)
    if min(n_train, n_val, n_test) == 0:
        raise ValueError(f"split of {len(d)} samples leaves an empty block: {(n_train, n_val, n_test)}")
    if len(d) > 1 and np.any(np.diff(d.timestamps) <= np.timedelta64(0, "ns")):
        raise ValueError("samples must be strictly increasing in time")
    tags = np.array(["train"] * n_train + ["val"] * n_val + ["test"] * n_test)
    return replace(d, split=tags, x_scaler=Scaler.fit(d.inputs[:n_train]),
                   y_scaler=Scaler.fit(d.targets[:n_train]))


def _values(s) -> np.ndarray:
    v = np.asarray(s.kwh if isinstance(s, LoadSeries) else s, dtype=np.float64)
    return v[~np.isnan(v)]


def describe(s) -> SummaryStats:
    """Mean, population std and linearly interpolated quartiles (NaN gaps ignored)."""
    v = _values(s)
    if v.size == 0:
        raise ValueError("describe needs a non-empty series")
    q25, q50, q75 = np.quantile(v, [0.25, 0.5, 0.75])
    return SummaryStats(float(v.mean()), float(v.std()), float(q25), float(q50), float(q75))


def pacf(s, max_lag: int) -> np.ndarray:
    """Partial autocorrelations at lags 0..max_lag by the Durbin-Levinson recursion."""
    v = _values(s)
    if v.size <= max_lag + 1:
        raise ValueError(f"series of length {v.size} too short for max_lag={max_lag}")
    c = v - v.mean()
    gamma0 = float(c @ c) / v.size
    if gamma0 <= 0.0:
        raise ValueError("pacf is undefined for a zero-variance series")
    rho = np.array([float(c[: v.size - k] @ c[k:]) / v.size for k in range(max_lag + 1)]) / gamma0

    out = np.empty(max_lag + 1)
    out[0] = 1.0
    phi = np.zeros(0)
    for k in range(1, max_lag + 1):
        num = rho[k] - phi @ rho[k - 1 : 0 : -1] if k > 1 else rho[1]
        den = 1.0 - phi @ rho[1:k] if k > 1 else 1.0
        pkk = num / den
        phi = np.append(phi - pkk * phi[::-1], pkk)
        out[k] = pkk
    return out
