"""Synthetic heteroskedastic, bimodal regression data with a known conditional density.

``y = sin(2 pi x) + b * m(x) + s(x) * e`` with ``x ~ U(0, 1)``, a fair sign
``b in {-1, +1}`` and ``e ~ N(0, 1)``.  The branch offset is
``m(x) = offset * x**offset_power`` and the noise scale
``s(x) = noise + noise_slope * x**noise_power``.

The mixture head cannot produce component scales below ``1 - psi`` target
standard deviations, so the defaults keep ``s(x)`` above that floor while
the branch opens into two well separated modes for large ``x``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SupervisedSet


@dataclass(frozen=True)
class BranchGenerator:
    offset: float = 6.0
    offset_power: float = 2.0
    noise: float = 1.0
    noise_slope: float = 0.5
    noise_power: float = 4.0

    def branch_offset(self, x):
        return self.offset * np.asarray(x) ** self.offset_power

    def noise_scale(self, x):
        return self.noise + self.noise_slope * np.asarray(x) ** self.noise_power

    def conditional_sample(self, x, rng: np.random.Generator, m: int = 1) -> np.ndarray:
        """Draws from the true p(y | x), shaped (len(x), m)."""
        x = np.asarray(x, dtype=np.float64).reshape(-1, 1)
        sign = np.where(rng.random((x.shape[0], m)) < 0.5, -1.0, 1.0)
        eps = rng.standard_normal((x.shape[0], m))
        return np.sin(2 * np.pi * x) + sign * self.branch_offset(x) + self.noise_scale(x) * eps

    def dataset(self, n: int, seed: int) -> SupervisedSet:
        """``n`` iid rows with hourly placeholder timestamps; a chronological split of them is iid."""
        rng = np.random.default_rng(seed)
        x = rng.random(n)
        y = self.conditional_sample(x, rng)[:, 0]
        return SupervisedSet.from_arrays(x[:, None], y)


DEFAULT_GENERATOR = BranchGenerator()


def make_dataset(n: int, seed: int, generator: BranchGenerator = DEFAULT_GENERATOR) -> SupervisedSet:
    return generator.dataset(n, seed)
