"""Probabilistic household load forecasting with Bayesian mixture density networks."""
from .autodiff import ContractError, DimensionError, EvaluationError, Tensor, backward, grad_check
from .bayes import PriorSpec, VariationalParams, kl_mean_field
from .data import SupervisedSet, build_features, ingest_load_csv, resample_hourly, split_chronological
from .ensemble import Ensemble, predict_samples, train_ensemble
from .mixture import HeadConfig, MixtureParams, mixture_log_density, mixture_sample
from .scoring import ScoreReport, crps_empirical, crps_gaussian, evaluate, improvement_table
from .training import ModelSpec, TrainConfig, TrainedModel, TrainingError, train

__version__ = "0.1.0"

__all__ = [
    "ContractError", "DimensionError", "EvaluationError", "Tensor", "backward", "grad_check",
    "PriorSpec", "VariationalParams", "kl_mean_field",
    "SupervisedSet", "build_features", "ingest_load_csv", "resample_hourly", "split_chronological",
    "Ensemble", "predict_samples", "train_ensemble",
    "HeadConfig", "MixtureParams", "mixture_log_density", "mixture_sample",
    "ScoreReport", "crps_empirical", "crps_gaussian", "evaluate", "improvement_table",
    "ModelSpec", "TrainConfig", "TrainedModel", "TrainingError", "train",
]
