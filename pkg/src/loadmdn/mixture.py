"""Spherical Gaussian mixture output layer.

The network's last layer emits ``3 * n_k`` raw values per input, laid out as
``[means | weight logits | scale logits]``.  Means are used as-is, weights go
through a softmax and scales through ``1 + ELU + floor``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, DimensionError, Tensor

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
SIGMA_FLOOR = 1e-8


@dataclass(frozen=True)
class HeadConfig:
    n_components: int = 3
    psi: float = 0.2
    floor: float = SIGMA_FLOOR

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError(f"n_components must be >= 1, got {self.n_components}")
        if not 0.1 <= self.psi <= 0.3:
            raise ValueError(f"psi must lie in [0.1, 0.3], got {self.psi}")
        if self.floor <= 0:
            raise ValueError(f"floor must be positive, got {self.floor}")

    @property
    def width(self) -> int:
        return 3 * self.n_components


@dataclass(frozen=True)
class MixtureParams:
    """Mixture weights, means and scales; the last axis runs over components."""

    weights: np.ndarray
    means: np.ndarray
    scales: np.ndarray

    @property
    def n_components(self) -> int:
        return self.weights.shape[-1]

    def __getitem__(self, index) -> "MixtureParams":
        return MixtureParams(self.weights[index], self.means[index], self.scales[index])

    def destandardize(self, mean: float, std: float) -> "MixtureParams":
        return MixtureParams(self.weights, self.means * std + mean, self.scales * std)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = np.exp(z - z.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def elu_plus_one(z, psi: float = 0.2, floor: float = SIGMA_FLOOR):
    """Positive scale activation ``1 + ELU_psi(z) + floor``; works on scalars and arrays."""
    z = np.asarray(z, dtype=np.float64)
    out = np.where(z >= 0.0, 1.0 + z, 1.0 + psi * np.expm1(np.minimum(z, 0.0))) + floor
    return out if out.ndim else float(out)


def _check_width(h_shape, cfg: HeadConfig) -> None:
    if len(h_shape) == 0 or h_shape[-1] != cfg.width:
        raise DimensionError(
            f"head expects last dimension {cfg.width} (3 x {cfg.n_components} components), got shape {tuple(h_shape)}"
        )


def split_head(h, cfg: HeadConfig = HeadConfig()) -> MixtureParams:
    """Turn raw head outputs of shape (..., 3*n_k) into constrained mixture parameters."""
    h = np.asarray(h.data if isinstance(h, Tensor) else h, dtype=np.float64)
    _check_width(h.shape, cfg)
    k = cfg.n_components
    return MixtureParams(
        weights=softmax(h[..., k : 2 * k]),
        means=h[..., :k].copy(),
        scales=elu_plus_one(h[..., 2 * k :], cfg.psi, cfg.floor) * np.ones(h.shape[:-1] + (k,)),
    )


def mixture_log_density(p: MixtureParams, y) -> np.ndarray | float:
    """``log sum_k w_k N(y; mu_k, s_k^2)`` evaluated with a max-shifted log-sum-exp."""
    y = np.asarray(y, dtype=np.float64)[..., None]
    with np.errstate(divide="ignore"):
        log_w = np.log(p.weights)
    z = (y - p.means) / p.scales
    terms = log_w - np.log(p.scales) - LOG_SQRT_2PI - 0.5 * z * z
    shift = terms.max(axis=-1, keepdims=True)
    out = (shift + np.log(np.exp(terms - shift).sum(axis=-1, keepdims=True)))[..., 0]
    return out if out.ndim else float(out)


def head_log_density(h: Tensor, y, cfg: HeadConfig) -> Tensor:
    """Differentiable per-row mixture log-density of targets ``y`` given raw head rows ``h``."""
    _check_width(h.shape, cfg)
    k = cfg.n_components
    y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
    means = h[:, :k]
    log_w = ad.log_softmax(h[:, k : 2 * k], axis=-1)
    scales = ad.elu_plus_one(h[:, 2 * k :], cfg.psi, cfg.floor)
    z = (y - means) / scales
    terms = log_w - ad.log(scales) - 0.5 * ad.square(z) - LOG_SQRT_2PI
    return ad.logsumexp(terms, axis=-1)


def gaussian_log_density(mu: Tensor, y, sigma: float = 1.0) -> Tensor:
    """Differentiable normal log-density with a fixed scale, one value per row of ``mu``."""
    y = np.asarray(y, dtype=np.float64).reshape(mu.shape)
    r = (mu - y) / sigma
    return -0.5 * ad.square(r) - (np.log(sigma) + LOG_SQRT_2PI)


def sample_rows(p: MixtureParams, rng: np.random.Generator) -> np.ndarray:
    """One ancestral draw per row of ``p`` (params shaped (rows, n_k)).

    The component is picked by inverse CDF on the cumulative weights (ties go
    to the lower index), then a normal draw is scaled into that component.
    Uses exactly ``rows`` uniforms followed by ``rows`` standard normals.
    """
    w = np.atleast_2d(p.weights)
    rows = w.shape[0]
    u = rng.random(rows)
    noise = rng.standard_normal(rows)
    cdf = np.cumsum(w, axis=-1)
    cdf /= cdf[:, -1:]
    k = np.argmax(cdf > u[:, None], axis=-1)
    idx = np.arange(rows)
    mu = np.broadcast_to(np.atleast_2d(p.means), w.shape)[idx, k]
    sd = np.broadcast_to(np.atleast_2d(p.scales), w.shape)[idx, k]
    return mu + sd * noise


def mixture_sample(p: MixtureParams, rng: np.random.Generator, m: int) -> np.ndarray:
    """``m`` independent draws from a single mixture (params shaped (n_k,))."""
    if m < 1:
        raise ContractError(f"sample count must be >= 1, got {m}")
    tiled = MixtureParams(
        np.broadcast_to(p.weights, (m, p.n_components)),
        np.broadcast_to(p.means, (m, p.n_components)),
        np.broadcast_to(p.scales, (m, p.n_components)),
    )
    return sample_rows(tiled, rng)


def empirical_quantiles(samples, qs) -> np.ndarray:
    """Linearly interpolated order statistics along the last axis.

    ``qs`` must lie strictly inside (0, 1).  The result has the quantile axis last.
    """
    samples = np.asarray(samples, dtype=np.float64)
    qs = np.atleast_1d(np.asarray(qs, dtype=np.float64))
    if samples.size == 0 or samples.shape[-1] == 0:
        raise ContractError("empirical_quantiles needs at least one sample")
    if np.any(qs <= 0.0) or np.any(qs >= 1.0):
        raise ContractError(f"quantile levels must lie in the open interval (0, 1), got {qs.tolist()}")
    return np.moveaxis(np.quantile(samples, qs, axis=-1), 0, -1)
