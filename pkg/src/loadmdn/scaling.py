from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STD_FLOOR = 1e-12


@dataclass(frozen=True)
class Scaler:
    """Per-column mean/std standardization fitted on the training split.

    Columns whose std falls below ``STD_FLOOR`` (constant on the training
    split) are given unit scale, so they map to 0 on training data and stay
    finite on later splits.
    """

    mean: np.ndarray | float
    std: np.ndarray | float

    @classmethod
    def fit(cls, values) -> "Scaler":
        values = np.asarray(values, dtype=np.float64)
        if values.shape[0] == 0:
            raise ValueError("cannot fit a scaler on zero rows")
        mean = values.mean(axis=0)
        std = values.std(axis=0)
        std = np.where(std < STD_FLOOR, 1.0, std)
        if values.ndim == 1:
            return cls(float(mean), float(std))
        return cls(mean, std)

    def to_dict(self) -> dict:
        return {"mean": np.atleast_1d(self.mean).tolist(), "std": np.atleast_1d(self.std).tolist(),
                "scalar": np.ndim(self.mean) == 0}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        if d.get("scalar"):
            return cls(float(d["mean"][0]), float(d["std"][0]))
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def standardize(values, scaler: Scaler) -> np.ndarray:
    return (np.asarray(values, dtype=np.float64) - scaler.mean) / scaler.std


def destandardize(values, scaler: Scaler) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) * scaler.std + scaler.mean
