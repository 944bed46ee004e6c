"""Mean-field Gaussian posteriors over network weights.

Each weight carries a location and an unconstrained pre-scale ``rho`` with
``sigma = softplus(rho)``.  Draws use the reparametrization
``w = loc + sigma * eps`` so adjoints reach both parameters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

INITIAL_POSTERIOR_STD = 0.01


def softplus(x):
    return np.logaddexp(0.0, x)


def inverse_softplus(y):
    """``rho`` such that ``softplus(rho) == y`` for ``y > 0``."""
    y = np.asarray(y, dtype=np.float64)
    return y + np.log(-np.expm1(-y))


@dataclass(frozen=True)
class PriorSpec:
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if self.std <= 0:
            raise ValueError(f"prior std must be positive, got {self.std}")


@dataclass
class VariationalParams:
    loc: Tensor
    pre_scale: Tensor

    def __post_init__(self):
        if not isinstance(self.loc, Tensor):
            self.loc = Tensor(self.loc, requires_grad=True)
        if not isinstance(self.pre_scale, Tensor):
            self.pre_scale = Tensor(self.pre_scale, requires_grad=True)
        if self.loc.shape != self.pre_scale.shape:
            raise ad.DimensionError(f"loc shape {self.loc.shape} differs from pre_scale shape {self.pre_scale.shape}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.loc.shape

    @property
    def scale(self) -> np.ndarray:
        return softplus(self.pre_scale.data)


def reparam_sample(q: VariationalParams, rng: np.random.Generator | None, eps=None) -> Tensor:
    """A differentiable weight draw ``loc + softplus(pre_scale) * eps``.

    ``eps`` overrides the standard-normal noise (pass 0 for the posterior mean).
    """
    if eps is None:
        eps = rng.standard_normal(q.shape)
    return q.loc + ad.softplus(q.pre_scale) * eps


def kl_mean_field(q: VariationalParams, p: PriorSpec = PriorSpec()) -> Tensor:
    """Closed-form KL(q || p) summed over every weight of ``q``."""
    sigma = ad.softplus(q.pre_scale)
    diff = q.loc - p.mean
    per_weight = (
        (math.log(p.std) - 0.5)
        - ad.log(sigma)
        + (ad.square(sigma) + ad.square(diff)) * (1.0 / (2.0 * p.std**2))
    )
    return ad.tsum(per_weight)


def xavier_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def variational_init(shape, rng: np.random.Generator, fan=None) -> VariationalParams:
    """Xavier-uniform locations and a constant initial posterior std of 0.01.

    ``shape`` is (fan_out, fan_in) for weight matrices; vectors (biases) get zero
    locations unless ``fan`` is given explicitly.
    """
    shape = tuple(shape)
    if fan is None and len(shape) == 2:
        fan = (shape[1], shape[0])
    if fan is None:
        loc = np.zeros(shape)
    else:
        bound = xavier_bound(*fan)
        loc = rng.uniform(-bound, bound, size=shape)
    rho = np.full(shape, float(inverse_softplus(INITIAL_POSTERIOR_STD)))
    return VariationalParams(Tensor(loc, requires_grad=True), Tensor(rho, requires_grad=True))
