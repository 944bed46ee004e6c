"""Network assembly, losses, ADAM and the early-stopped training loop.

Parameters live in a flat ``{name: ndarray}`` mapping owned by the loop;
each minibatch wraps them as fresh leaf tensors and records a new tape.
Deterministic layers are named ``W{i}``/``b{i}``; variational layers store
``W{i}.loc``/``W{i}.pre_scale`` and likewise for biases.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .bayes import PriorSpec, VariationalParams, kl_mean_field, reparam_sample, variational_init, xavier_bound
from .data import SupervisedSet
from .mixture import SIGMA_FLOOR, HeadConfig, MixtureParams, gaussian_log_density, head_log_density, split_head
from .scaling import Scaler

log = logging.getLogger(__name__)

VARIANTS = ("gauss-homo", "gauss-hete", "det-mdn", "bay-mdn")


class TrainingError(RuntimeError):
    def __init__(self, message: str, epoch: int | None = None, batch: int | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class ModelSpec:
    variant: str = "det-mdn"
    hidden_sizes: tuple[int, ...] = (100, 100, 100)
    n_components: int | None = None
    l2_penalty: float = 1e-2
    temperature: float = 1e-2
    psi: float = 0.2
    prior: PriorSpec = PriorSpec()

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        k = self.n_components
        if k is None:
            k = 1 if self.variant.startswith("gauss") else 3
            object.__setattr__(self, "n_components", k)
        if self.variant.startswith("gauss") and k != 1:
            raise ValueError(f"{self.variant} requires n_components=1, got {k}")
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.bayesian and self.temperature <= 0:
            raise ValueError("temperature must be positive for bayesian models")
        HeadConfig(k, self.psi)

    @property
    def bayesian(self) -> bool:
        return self.variant == "bay-mdn"

    @property
    def homoskedastic(self) -> bool:
        return self.variant == "gauss-homo"

    @property
    def head(self) -> HeadConfig:
        return HeadConfig(self.n_components, self.psi)

    @property
    def output_width(self) -> int:
        return 1 if self.homoskedastic else self.head.width

    def layer_shapes(self, n_inputs: int) -> list[tuple[int, int]]:
        sizes = [n_inputs, *self.hidden_sizes, self.output_width]
        return [(sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)]

    def to_dict(self) -> dict:
        return {"variant": self.variant, "hidden_sizes": list(self.hidden_sizes),
                "n_components": self.n_components, "l2_penalty": self.l2_penalty,
                "temperature": self.temperature, "psi": self.psi,
                "prior_mean": self.prior.mean, "prior_std": self.prior.std}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelSpec":
        d = dict(d)
        prior = PriorSpec(d.pop("prior_mean", 0.0), d.pop("prior_std", 1.0))
        return cls(prior=prior, **d)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 512
    max_epochs: int = 10000
    patience: int = 50
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if min(self.lr, self.batch_size, self.max_epochs, self.patience, self.eps) <= 0:
            raise ValueError("training hyperparameters must be positive")
        if self.patience >= self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("adam betas must lie in (0, 1)")


@dataclass
class TrainedModel:
    spec: ModelSpec
    params: dict[str, np.ndarray]
    x_scaler: Scaler
    y_scaler: Scaler
    sigma_y: float | None = None
    history: list[tuple[int, float, float]] = field(default_factory=list)
    seed: int = 0
    best_epoch: int = 0

    @property
    def n_inputs(self) -> int:
        return self.params["W0.loc" if self.spec.bayesian else "W0"].shape[1]

    @property
    def n_layers(self) -> int:
        return len(self.spec.hidden_sizes) + 1


# --- parameters -------------------------------------------------------------

def init_params(spec: ModelSpec, n_inputs: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Xavier-uniform weights and zero biases; variational layers start at posterior std 0.01."""
    params: dict[str, np.ndarray] = {}
    for i, (fan_out, fan_in) in enumerate(spec.layer_shapes(n_inputs)):
        if spec.bayesian:
            for name, shape in ((f"W{i}", (fan_out, fan_in)), (f"b{i}", (fan_out,))):
                q = variational_init(shape, rng)
                params[f"{name}.loc"] = np.array(q.loc.data)
                params[f"{name}.pre_scale"] = np.array(q.pre_scale.data)
        else:
            bound = xavier_bound(fan_in, fan_out)
            params[f"W{i}"] = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            params[f"b{i}"] = np.zeros(fan_out)
    return params


def _leaves(params: Mapping, requires_grad: bool) -> dict[str, Tensor]:
    return {k: v if isinstance(v, Tensor) else Tensor(v, requires_grad=requires_grad) for k, v in params.items()}


def _n_layers(params: Mapping) -> int:
    return sum(1 for k in params if k.startswith("W") and not k.endswith(".pre_scale"))


def _noise_for(noise, name: str, shape, rng):
    if noise is None:
        if rng is None:
            raise ValueError("bayesian forward needs an rng or explicit noise")
        return rng.standard_normal(shape)
    if isinstance(noise, Mapping):
        return noise[name]
    return noise


def layer_weights(spec: ModelSpec, leaves: Mapping[str, Tensor], rng=None, noise=None) -> list[tuple[Tensor, Tensor]]:
    """Concrete (W, b) per layer; variational layers draw one reparametrized sample each."""
    layers = []
    for i in range(_n_layers(leaves)):
        if spec.bayesian:
            pair = []
            for name in (f"W{i}", f"b{i}"):
                q = VariationalParams(leaves[f"{name}.loc"], leaves[f"{name}.pre_scale"])
                pair.append(reparam_sample(q, rng, _noise_for(noise, name, q.shape, rng)))
            layers.append(tuple(pair))
        else:
            layers.append((leaves[f"W{i}"], leaves[f"b{i}"]))
    return layers


def network(layers, x) -> Tensor:
    h = ad.as_tensor(x)
    for i, (W, b) in enumerate(layers):
        h = ad.affine(h, W, b)
        if i < len(layers) - 1:
            h = ad.relu(h)
    return h


def sample_noise(spec: ModelSpec, params: Mapping, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Standard-normal noise for every variational weight, drawn in layer order."""
    out = {}
    for i in range(_n_layers(params)):
        for name in (f"W{i}", f"b{i}"):
            out[name] = rng.standard_normal(np.shape(params[f"{name}.loc"]))
    return out


def posterior_kl(spec: ModelSpec, leaves: Mapping[str, Tensor]) -> Tensor:
    total = None
    for i in range(_n_layers(leaves)):
        for name in (f"W{i}", f"b{i}"):
            kl = kl_mean_field(VariationalParams(leaves[f"{name}.loc"], leaves[f"{name}.pre_scale"]), spec.prior)
            total = kl if total is None else total + kl
    return total


# --- losses -----------------------------------------------------------------

def _log_density(spec: ModelSpec, h: Tensor, y) -> Tensor:
    if spec.homoskedastic:
        return gaussian_log_density(h.reshape(-1), y, 1.0)
    return head_log_density(h, y, spec.head)


def nll_loss(spec: ModelSpec, params: Mapping, x, y, *, rng=None, noise=None, penalty: bool = True) -> Tensor:
    """Mean negative log-likelihood over the batch, plus the L2 penalty on deterministic weights.

    For ``gauss-homo`` the scale is held at 1 in standardized space, so the
    loss is a shifted half squared error.  Bayesian models evaluate the
    likelihood under one weight draw (``noise`` fixes it; 0 gives the mean).
    """
    leaves = _leaves(params, requires_grad=False)
    h = network(layer_weights(spec, leaves, rng, noise), x)
    loss = -ad.mean(_log_density(spec, h, y))
    if penalty and not spec.bayesian and spec.l2_penalty:
        for i in range(_n_layers(leaves)):
            loss = loss + spec.l2_penalty * ad.tsum(ad.square(leaves[f"W{i}"]))
    return loss


def tempered_elbo_loss(spec: ModelSpec, params: Mapping, x, y, tau: float, n_train: int, *,
                       rng=None, noise=None) -> Tensor:
    """Batch-mean NLL under one weight draw plus ``tau * KL / n_train``.

    Scaling the KL by the training-set size makes an epoch of minibatch
    objectives sum to the per-dataset weighted ELBO.
    """
    if not spec.bayesian:
        raise ValueError("tempered_elbo_loss needs a bayesian model")
    if n_train < np.shape(y)[0]:
        raise ValueError("training-set size smaller than the batch")
    leaves = _leaves(params, requires_grad=False)
    nll = nll_loss(spec, leaves, x, y, rng=rng, noise=noise)
    return nll + posterior_kl(spec, leaves) * (tau / n_train)


def _objective(spec: ModelSpec, leaves, x, y, n_train, rng) -> Tensor:
    if spec.bayesian:
        return tempered_elbo_loss(spec, leaves, x, y, spec.temperature, n_train, rng=rng)
    return nll_loss(spec, leaves, x, y)


def validation_nll(spec: ModelSpec, params: Mapping, x, y) -> float:
    """Early-stopping metric: NLL without penalties, at posterior-mean weights for bayesian models."""
    return float(nll_loss(spec, params, x, y, noise=0.0, penalty=False).data)


# --- ADAM -------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros(cls, params: Mapping[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(v) for k, v in params.items()}, {k: np.zeros_like(v) for k, v in params.items()})


def adam_step(params: dict[str, np.ndarray], grads, state: AdamState, cfg: TrainConfig) -> dict[str, np.ndarray]:
    """One bias-corrected ADAM update; ``grads`` may be a GradientMap-derived dict keyed like ``params``."""
    state.t += 1
    c1 = 1.0 - cfg.beta1**state.t
    c2 = 1.0 - cfg.beta2**state.t
    out = {}
    for k, p in params.items():
        g = grads.get(k)
        if g is None:
            g = np.zeros_like(p)
        m = state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g
        v = state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g
        out[k] = p - cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
    return out


# --- prediction -------------------------------------------------------------

def forward(model: TrainedModel, x, *, rng=None, noise=None) -> MixtureParams:
    """Mixture parameters (standardized units) for standardized inputs ``x``.

    Bayesian models take one posterior draw per call unless ``noise`` is
    given; ``gauss-homo`` reports ``sigma_y`` (1 before it is estimated).
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[1] != model.n_inputs:
        raise ad.DimensionError(f"expected {model.n_inputs} input features, got shape {x.shape}")
    leaves = _leaves(model.params, requires_grad=False)
    h = network(layer_weights(model.spec, leaves, rng, noise), x2).data
    p = head_params(model, h)
    return p[0] if single else p


def head_params(model: TrainedModel, h: np.ndarray) -> MixtureParams:
    """Mixture parameters from raw head outputs of shape (..., output_width)."""
    if model.spec.homoskedastic:
        sigma = 1.0 if model.sigma_y is None else model.sigma_y
        return MixtureParams(np.ones_like(h), h.copy(), np.full_like(h, sigma))
    return split_head(h, model.spec.head)


def estimate_validation_sigma(model: TrainedModel, x_val, y_val) -> float:
    """Root mean squared residual of the mean prediction, floored at the head's variance floor."""
    y_val = np.asarray(y_val, dtype=np.float64)
    if y_val.size == 0:
        raise ValueError("empty validation set")
    leaves = _leaves(model.params, requires_grad=False)
    mu = network(layer_weights(model.spec, leaves, noise=0.0), np.atleast_2d(x_val)).data.reshape(-1)
    return sigma_from_residuals(mu - y_val)


def sigma_from_residuals(residuals) -> float:
    r = np.asarray(residuals, dtype=np.float64)
    if r.size == 0:
        raise ValueError("empty validation set")
    return max(math.sqrt(float(np.mean(r * r))), SIGMA_FLOOR)


# --- training loop ----------------------------------------------------------

def _grads_by_name(gmap: ad.GradientMap, leaves: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
    return {k: gmap[t] for k, t in leaves.items()}


def train(spec: ModelSpec, data: SupervisedSet, cfg: TrainConfig = TrainConfig()) -> TrainedModel:
    """Minibatch ADAM with per-epoch shuffling and early stopping on validation NLL.

    The parameters of the best validation epoch are restored at the end.
    """
    x, y = data.standardized("train")
    xv, yv = data.standardized("val")
    if len(y) == 0 or len(yv) == 0:
        raise ValueError("train and validation splits must be non-empty")
    rng = np.random.default_rng(cfg.seed)
    params = init_params(spec, x.shape[1], rng)
    state = AdamState.zeros(params)
    n = len(y)

    history: list[tuple[int, float, float]] = []
    best_val, best_params, best_epoch, wait = math.inf, params, 0, 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for batch, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            leaves = _leaves(params, requires_grad=True)
            loss = _objective(spec, leaves, x[idx], y[idx], n, rng)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingError(f"non-finite training loss at epoch {epoch}, batch {batch}", epoch, batch)
            params = adam_step(params, _grads_by_name(ad.backward(loss), leaves), state, cfg)
            total += value * len(idx)
        val = validation_nll(spec, params, xv, yv)
        if not math.isfinite(val):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}", epoch, None)
        history.append((epoch, total / n, val))
        if val < best_val:
            best_val, best_params, best_epoch, wait = val, params, epoch, 0
        else:
            wait += 1
            if wait >= cfg.patience:
                break
    log.debug("%s seed %d: stopped at epoch %d, best %d (val %.5f)", spec.variant, cfg.seed,
              history[-1][0], best_epoch, best_val)

    model = TrainedModel(spec, best_params, data.x_scaler, data.y_scaler, None, history, cfg.seed, best_epoch)
    if spec.homoskedastic:
        model.sigma_y = estimate_validation_sigma(model, xv, yv)
    return model


def with_posterior_std(model: TrainedModel, std: float) -> TrainedModel:
    """Copy of a bayesian model with every posterior std replaced (0 collapses it onto its means)."""
    if not model.spec.bayesian:
        raise ValueError("not a bayesian model")
    from .bayes import inverse_softplus

    rho = -np.inf if std == 0 else float(inverse_softplus(std))
    params = {k: (np.full_like(v, rho) if k.endswith(".pre_scale") else v) for k, v in model.params.items()}
    return replace(model, params=params)
