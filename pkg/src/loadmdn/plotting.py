"""Report figures written to PNG next to the CSV outputs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .data import WEEKDAYS  # noqa: E402

# no software/version stamp, so identical data gives identical bytes
_PNG_META = {"Software": None}
_STYLE = {"figure.figsize": (7.0, 3.2), "axes.spines.top": False, "axes.spines.right": False,
          "axes.grid": True, "grid.alpha": 0.3, "font.size": 9}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="png", dpi=110, metadata=_PNG_META)
    plt.close(fig)
    return path


def quantile_fan(timestamps, targets, quantiles, levels, path, max_points: int = 168) -> Path:
    """Observed load against nested central predictive intervals for the first ``max_points`` windows."""
    q = np.asarray(quantiles)[:max_points]
    levels = np.asarray(levels)
    t = np.asarray(timestamps)[:max_points]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        n = len(levels)
        for lo in range(n // 2):
            hi = n - 1 - lo
            ax.fill_between(t, q[:, lo], q[:, hi], color="tab:blue", alpha=0.15 + 0.2 * lo, lw=0,
                            label=f"{levels[lo]:.0%}-{levels[hi]:.0%}")
        if n % 2:
            ax.plot(t, q[:, n // 2], color="tab:blue", lw=1, label="median")
        ax.plot(t, np.asarray(targets)[:max_points], color="k", lw=0.8, label="observed")
        ax.set_ylabel("kWh")
        ax.legend(loc="upper right", fontsize=7, frameon=False)
        fig.autofmt_xdate()
        fig.tight_layout()
        return _save(fig, path)


def crps_profile(report, path) -> Path:
    """Hour-of-day and weekday CRPS bars."""
    with plt.rc_context(_STYLE):
        fig, (a, b) = plt.subplots(1, 2, gridspec_kw={"width_ratios": [3, 1]})
        hours = sorted(report.by_hour)
        a.bar(hours, [report.by_hour[h] for h in hours], color="tab:blue")
        a.set_xlabel("hour")
        a.set_ylabel("CRPS [kWh]")
        days = sorted(report.by_weekday)
        b.bar([WEEKDAYS[d] for d in days], [report.by_weekday[d] for d in days], color="tab:orange")
        b.tick_params(axis="x", labelrotation=90)
        fig.suptitle(f"{report.variant or 'model'}: overall {report.overall:.4f}", fontsize=9)
        fig.tight_layout()
        return _save(fig, path)


def training_curves(histories, path) -> Path:
    """Train and validation loss per epoch, one line pair per ensemble member."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for i, h in enumerate(histories):
            if not h:
                continue
            h = np.asarray(h)
            ax.plot(h[:, 0], h[:, 1], color=f"C{i}", lw=0.8, alpha=0.6)
            ax.plot(h[:, 0], h[:, 2], color=f"C{i}", lw=1.2, ls="--", label=f"member {i}")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss (solid train, dashed val)")
        ax.legend(fontsize=7, frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def pacf_plot(values, n_obs: int, path) -> Path:
    """PACF stems with the +-1.96/sqrt(n) white-noise band."""
    values = np.asarray(values)
    lags = np.arange(len(values))
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.vlines(lags[1:], 0, values[1:], color="tab:blue")
        ax.plot(lags[1:], values[1:], "o", ms=3, color="tab:blue")
        band = 1.96 / np.sqrt(max(n_obs, 1))
        ax.axhspan(-band, band, color="grey", alpha=0.2, lw=0)
        ax.axhline(0, color="k", lw=0.6)
        ax.set_xlabel("lag [h]")
        ax.set_ylabel("PACF")
        fig.tight_layout()
        return _save(fig, path)
