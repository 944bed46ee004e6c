"""Deep ensembles and Monte-Carlo predictive sampling.

Members are pooled with uniform weights.  Random streams are keyed by
``(seed, member seed, ...)`` rather than member position, so reordering the
members or scoring inputs in a different order leaves every draw unchanged.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .bayes import softplus
from .data import SupervisedSet
from .mixture import MixtureParams, empirical_quantiles, sample_rows
from .scaling import Scaler, standardize
from .training import ModelSpec, TrainConfig, TrainedModel, TrainingError, head_params, train

DEFAULT_TOTAL_SAMPLES = 500
_CHUNK = 256


class EnsembleError(RuntimeError):
    def __init__(self, message: str, member: int):
        super().__init__(message)
        self.member = member


@dataclass
class Ensemble:
    members: list[TrainedModel]

    def __post_init__(self):
        if not self.members:
            raise ValueError("an ensemble needs at least one member")
        first = self.members[0]
        for m in self.members[1:]:
            if m.spec != first.spec:
                raise ValueError("ensemble members must share one ModelSpec")
            if not (_same_scaler(m.x_scaler, first.x_scaler) and _same_scaler(m.y_scaler, first.y_scaler)):
                raise ValueError("ensemble members must share scalers")

    def __len__(self) -> int:
        return len(self.members)

    @property
    def spec(self) -> ModelSpec:
        return self.members[0].spec

    @property
    def x_scaler(self) -> Scaler:
        return self.members[0].x_scaler

    @property
    def y_scaler(self) -> Scaler:
        return self.members[0].y_scaler

    @property
    def seeds(self) -> list[int]:
        return [m.seed for m in self.members]


def _same_scaler(a: Scaler, b: Scaler) -> bool:
    return np.array_equal(a.mean, b.mean) and np.array_equal(a.std, b.std)


@dataclass
class PredictiveSamples:
    """Pooled draws in original target units, one row per input.

    ``member`` and ``draw`` give the provenance of each column.
    """

    samples: np.ndarray
    member: np.ndarray
    draw: np.ndarray

    def __len__(self) -> int:
        return self.samples.shape[0]


def _train_member(args):
    spec, data, cfg, index = args
    try:
        return train(spec, data, cfg)
    except TrainingError as exc:
        raise EnsembleError(f"member {index} (seed {cfg.seed}) diverged: {exc}", index) from exc


def train_ensemble(spec: ModelSpec, data: SupervisedSet, cfg: TrainConfig = TrainConfig(), n_members: int = 5,
                   workers: int = 1) -> Ensemble:
    """Train ``n_members`` independent models with seeds ``cfg.seed + i``."""
    if n_members < 1:
        raise ValueError(f"n_members must be >= 1, got {n_members}")
    jobs = [(spec, data, replace(cfg, seed=cfg.seed + i), i) for i in range(n_members)]
    if workers > 1 and n_members > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            members = list(pool.map(_train_member, jobs))
    else:
        members = [_train_member(job) for job in jobs]
    return Ensemble(members)


def as_ensemble(model) -> Ensemble:
    return model if isinstance(model, Ensemble) else Ensemble([model])


def draws_per_member(n_members: int, total: int = DEFAULT_TOTAL_SAMPLES) -> int:
    return math.ceil(total / n_members)


def _weight_sets(model: TrainedModel, m: int, rng: np.random.Generator) -> list[tuple[np.ndarray, np.ndarray]]:
    layers = []
    for i in range(model.n_layers):
        pair = []
        for name in (f"W{i}", f"b{i}"):
            loc, rho = model.params[f"{name}.loc"], model.params[f"{name}.pre_scale"]
            eps = rng.standard_normal((m,) + loc.shape)
            pair.append(loc + softplus(rho) * eps)
        layers.append(tuple(pair))
    return layers


def _batched_network(layers, x: np.ndarray) -> np.ndarray:
    h = x
    for i, (W, b) in enumerate(layers):
        h = h @ np.swapaxes(W, -1, -2) + b[..., None, :] if W.ndim == 3 else h @ W.T + b
        if i < len(layers) - 1:
            h = np.maximum(h, 0.0)
    return h


def member_mixtures(model: TrainedModel, x: np.ndarray, m: int, seed: int) -> MixtureParams:
    """Standardized mixture parameters shaped (inputs, m, n_k): one row per predictive draw.

    Bayesian members take ``m`` weight draws (shared across inputs); fixed-weight
    members repeat the same mixture ``m`` times.
    """
    if model.spec.bayesian:
        layers = _weight_sets(model, m, np.random.default_rng([seed, model.seed, 1, 0]))
        h = _batched_network(layers, x)  # (m, inputs, width)
        p = head_params(model, np.swapaxes(h, 0, 1))
        return p
    layers = [(model.params[f"W{i}"], model.params[f"b{i}"]) for i in range(model.n_layers)]
    p = head_params(model, _batched_network(layers, x))
    shape = (x.shape[0], m, p.n_components)
    return MixtureParams(*(np.broadcast_to(a[:, None, :], shape) for a in (p.weights, p.means, p.scales)))


def predict_samples(e, x_raw, m: int | None = None, seed: int = 0) -> PredictiveSamples:
    """Pool ``m`` draws per member for every row of raw features ``x_raw``.

    Each input's mixture draws come from its own stream keyed by
    ``(seed, member seed, input index)``; samples are returned in target units.
    """
    e = as_ensemble(e)
    m = draws_per_member(len(e)) if m is None else int(m)
    if m < 1:
        raise ValueError(f"draws per member must be >= 1, got {m}")
    x = standardize(np.atleast_2d(x_raw), e.x_scaler)
    n = x.shape[0]
    out = np.empty((n, m * len(e)))
    for j, member in enumerate(e.members):
        cols = slice(j * m, (j + 1) * m)
        for start in range(0, n, _CHUNK):
            stop = min(start + _CHUNK, n)
            p = member_mixtures(member, x[start:stop], m, seed)
            for r, i in enumerate(range(start, stop)):
                rng = np.random.default_rng([seed, member.seed, 0, i])
                out[i, cols] = sample_rows(p[r], rng)
    ys = e.y_scaler
    return PredictiveSamples(out * ys.std + ys.mean, np.repeat(np.arange(len(e)), m), np.tile(np.arange(m), len(e)))


def predictive_summary(s: PredictiveSamples, qs=(0.05, 0.25, 0.5, 0.75, 0.95)) -> dict[str, np.ndarray]:
    return {"mean": s.samples.mean(axis=-1), "quantiles": empirical_quantiles(s.samples, qs),
            "levels": np.asarray(qs, dtype=np.float64)}
