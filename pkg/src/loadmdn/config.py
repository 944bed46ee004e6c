"""Run configuration: a small TOML document with command-line overrides.

Layout::

    variant = "bay-mdn-devi"
    seed = 0

    [model]    # ModelSpec fields (prior as prior_mean / prior_std)
    [train]    # TrainConfig fields plus n_members and workers
    [predict]  # n_samples, quantiles
    [data]     # household, column mapping, split fractions, pacf_lags

Unknown keys are errors.  The effective configuration is written back as
``config.toml`` in every output directory.
"""
from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .data import DEFAULT_SCHEMA
from .training import ModelSpec, TrainConfig

CONFIG_FILENAME = "config.toml"

# command-line variant -> (network variant, default ensemble size)
CLI_VARIANTS: dict[str, tuple[str, int]] = {
    "gauss-homo": ("gauss-homo", 1),
    "gauss-hete": ("gauss-hete", 1),
    "det-mdn": ("det-mdn", 1),
    "bay-mdn-vi": ("bay-mdn", 1),
    "bay-mdn-de": ("det-mdn", 5),
    "bay-mdn-devi": ("bay-mdn", 5),
}


class ConfigError(ValueError):
    pass


@dataclass
class ModelSection:
    hidden_sizes: list[int] = field(default_factory=lambda: [100, 100, 100])
    n_components: int = 3
    l2_penalty: float = 1e-2
    temperature: float = 1e-2
    psi: float = 0.2
    prior_mean: float = 0.0
    prior_std: float = 1.0


@dataclass
class TrainSection:
    lr: float = 1e-3
    batch_size: int = 512
    max_epochs: int = 10000
    patience: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    n_members: int = 0  # 0: the variant's default
    workers: int = 1


@dataclass
class PredictSection:
    n_samples: int = 500
    quantiles: list[float] = field(default_factory=lambda: [0.05, 0.25, 0.5, 0.75, 0.95])


@dataclass
class DataSection:
    household: str = ""
    household_column: str = DEFAULT_SCHEMA["household"]
    timestamp_column: str = DEFAULT_SCHEMA["timestamp"]
    kwh_column: str = DEFAULT_SCHEMA["kwh"]
    skip_invalid: bool = False
    train_frac: float = 0.70
    val_frac: float = 0.15
    test_frac: float = 0.15
    pacf_lags: int = 48

    @property
    def schema(self) -> dict[str, str]:
        return {"household": self.household_column, "timestamp": self.timestamp_column, "kwh": self.kwh_column}


@dataclass
class RunConfig:
    variant: str = "det-mdn"
    seed: int = 0
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    predict: PredictSection = field(default_factory=PredictSection)
    data: DataSection = field(default_factory=DataSection)

    def __post_init__(self):
        if self.variant not in CLI_VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {sorted(CLI_VARIANTS)}")
        if self.train.n_members < 0:
            raise ConfigError("train.n_members must be >= 0")
        if self.predict.n_samples < 1:
            raise ConfigError("predict.n_samples must be >= 1")

    @property
    def n_members(self) -> int:
        return self.train.n_members or CLI_VARIANTS[self.variant][1]

    def model_spec(self) -> ModelSpec:
        net = CLI_VARIANTS[self.variant][0]
        m = self.model
        k = 1 if net.startswith("gauss") else m.n_components
        return ModelSpec.from_dict({"variant": net, "hidden_sizes": tuple(m.hidden_sizes), "n_components": k,
                                    "l2_penalty": m.l2_penalty, "temperature": m.temperature, "psi": m.psi,
                                    "prior_mean": m.prior_mean, "prior_std": m.prior_std})

    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(lr=t.lr, batch_size=t.batch_size, max_epochs=t.max_epochs, patience=t.patience,
                           seed=self.seed, beta1=t.beta1, beta2=t.beta2, eps=t.eps)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def write(self, directory) -> Path:
        path = Path(directory) / CONFIG_FILENAME
        path.write_text(self.dumps())
        return path


_SECTIONS = {"model": ModelSection, "train": TrainSection, "predict": PredictSection, "data": DataSection}


def _coerce(cls, key: str, value, where: str):
    (f,) = [f for f in fields(cls) if f.name == key] or [None]
    if f is None:
        raise ConfigError(f"unknown key {where}{key!r}")
    default = getattr(cls(), key)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}{key} must be a boolean")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where}{key} must be a list")
        kind = type(default[0]) if default else float
        return [kind(v) for v in value]
    if isinstance(default, (int, float)) and not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{where}{key} must be a number")
    if isinstance(default, int) and isinstance(value, float) and not value.is_integer():
        raise ConfigError(f"{where}{key} must be an integer")
    return type(default)(value)


def from_mapping(doc: Mapping[str, Any]) -> RunConfig:
    """Build a RunConfig from a parsed document, rejecting unknown sections and keys."""
    top: dict[str, Any] = {}
    sections: dict[str, Any] = {}
    for key, value in doc.items():
        if key in _SECTIONS:
            if not isinstance(value, Mapping):
                raise ConfigError(f"[{key}] must be a table")
            cls = _SECTIONS[key]
            sections[key] = cls(**{k: _coerce(cls, k, v, f"{key}.") for k, v in value.items()})
        elif key == "variant":
            top[key] = str(value)
        elif key == "seed":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError("seed must be an integer")
            top[key] = value
        else:
            raise ConfigError(f"unknown key {key!r}")
    return RunConfig(**top, **sections)


def load_config(path=None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Read ``path`` (defaults when None) and apply ``overrides``; override values that are None are ignored."""
    doc: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    cfg = from_mapping(doc)
    return apply_overrides(cfg, overrides or {})


def apply_overrides(cfg: RunConfig, overrides: Mapping[str, Any]) -> RunConfig:
    """Keys are ``variant``, ``seed`` or dotted ``section.key``."""
    for key, value in overrides.items():
        if value is None:
            continue
        if "." in key:
            section, name = key.split(".", 1)
            if section not in _SECTIONS:
                raise ConfigError(f"unknown section {section!r}")
            sub = getattr(cfg, section)
            cfg = replace(cfg, **{section: replace(sub, **{name: _coerce(type(sub), name, value, f"{section}.")})})
        elif key in ("variant", "seed"):
            cfg = replace(cfg, **{key: value})
        else:
            raise ConfigError(f"unknown key {key!r}")
    return cfg
