"""CRPS estimators and report aggregation (overall, hour-of-day, weekday)."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import ndtr

from .data import WEEKDAYS, SupervisedSet
from .ensemble import draws_per_member, predict_samples, as_ensemble

INV_SQRT_PI = 1.0 / math.sqrt(math.pi)


def crps_empirical(samples, y) -> np.ndarray | float:
    """Sample CRPS ``mean|X - y| - mean|X - X'| / 2`` along the last axis.

    The double sum uses the sorted-sample identity
    ``sum_ij |x_i - x_j| = 2 sum_i (2i - m - 1) x_(i)``, so cost is O(m log m).
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.shape[-1] == 0:
        raise ValueError("crps_empirical needs at least one sample")
    y = np.asarray(y, dtype=np.float64)
    m = x.shape[-1]
    spread_w = 2.0 * np.arange(1, m + 1) - m - 1.0
    first = np.abs(x - y[..., None]).mean(axis=-1)
    second = (np.sort(x, axis=-1) @ spread_w) / (m * m)
    out = first - second
    return out if out.ndim else float(out)


def crps_bruteforce(samples, y) -> float:
    """Direct O(m^2) evaluation of the sample CRPS, kept as a reference."""
    x = np.asarray(samples, dtype=np.float64)
    m = x.size
    return float(np.abs(x - y).sum() / m - np.abs(x[:, None] - x[None, :]).sum() / (2.0 * m * m))


def crps_gaussian(mu, sigma, y):
    """Closed-form CRPS of N(mu, sigma^2) at y."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    z = (np.asarray(y, dtype=np.float64) - mu) / sigma
    pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    out = sigma * (z * (2.0 * ndtr(z) - 1.0) + 2.0 * pdf - INV_SQRT_PI)
    return out if np.ndim(out) else float(out)


@dataclass
class ScoreReport:
    """Per-sample CRPS in kWh with hour-of-day and weekday breakdowns."""

    per_sample: np.ndarray
    timestamps: np.ndarray
    variant: str = ""
    by_hour: dict[int, float] = field(default_factory=dict)
    by_weekday: dict[int, float] = field(default_factory=dict)

    @property
    def overall(self) -> float:
        return float(self.per_sample.mean())

    @classmethod
    def from_scores(cls, scores, timestamps, variant: str = "") -> "ScoreReport":
        scores = np.asarray(scores, dtype=np.float64)
        idx = pd.DatetimeIndex(np.asarray(timestamps, dtype="datetime64[ns]"))
        hours, days = idx.hour.to_numpy(), idx.weekday.to_numpy()
        by_hour = {h: float(scores[hours == h].mean()) for h in range(24) if np.any(hours == h)}
        by_day = {d: float(scores[days == d].mean()) for d in range(7) if np.any(days == d)}
        return cls(scores, np.asarray(timestamps), variant, by_hour, by_day)

    def rows(self) -> list[tuple[str, str, float, int]]:
        idx = pd.DatetimeIndex(self.timestamps)
        hours, days = idx.hour.to_numpy(), idx.weekday.to_numpy()
        out = [("overall", "all", self.overall, len(self.per_sample))]
        out += [("hour", f"{h:02d}", v, int((hours == h).sum())) for h, v in sorted(self.by_hour.items())]
        out += [("weekday", WEEKDAYS[d], v, int((days == d).sum())) for d, v in sorted(self.by_weekday.items())]
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["variant", "grouping", "key", "crps", "count"])
            for grouping, key, value, count in self.rows():
                w.writerow([self.variant, grouping, key, repr(float(value)), count])


def read_report_csv(path) -> dict:
    """Parse a report written by :meth:`ScoreReport.write_csv` into ``{variant, overall, groups}``."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or rows[0]["grouping"] != "overall":
        raise ValueError(f"{path}: not a CRPS report (first row must be the overall score)")
    return {"variant": rows[0]["variant"], "overall": float(rows[0]["crps"]),
            "groups": {(r["grouping"], r["key"]): float(r["crps"]) for r in rows[1:]}}


def evaluate(e, test: SupervisedSet, m_total: int = 500, seed: int = 0, variant: str = "") -> ScoreReport:
    """Score every test row with the sample CRPS of ``m_total`` pooled predictive draws (kWh)."""
    if len(test) == 0:
        raise ValueError("empty test set")
    e = as_ensemble(e)
    s = predict_samples(e, test.inputs, draws_per_member(len(e), m_total), seed)
    return ScoreReport.from_scores(crps_empirical(s.samples, test.targets), test.timestamps, variant)


def improvement_table(reports: dict[str, float], baseline: str) -> dict[str, float]:
    """Percent CRPS reduction of each entry relative to ``baseline``; NaN when the baseline scores 0."""
    if baseline not in reports:
        raise KeyError(f"baseline {baseline!r} not among {sorted(reports)}")

    def score(r):
        return r.overall if isinstance(r, ScoreReport) else float(r)

    base = score(reports[baseline])
    if base == 0:
        return {k: math.nan for k in reports}
    return {k: 100.0 * (base - score(v)) / base for k, v in reports.items()}
