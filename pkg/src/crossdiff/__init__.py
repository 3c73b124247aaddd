"""Galerkin/Wong-Zakai simulator for stochastic SKT-type cross-diffusion systems in one dimension."""

__version__ = "0.1.0"

from .errors import (
    CertificateError,
    ConfigError,
    ConvergenceError,
    CrossDiffError,
    DomainError,
    EnsembleError,
    FalsificationError,
    ModelError,
    StepError,
)
from .model import ModelParams
from .galerkin import GridSpec, SpeciesField, build_basis
from .noise import NoiseModel
from .steppers import StepConfig, run_path
from .config import RunConfig, parse_config, load_config

__all__ = [
    "__version__",
    "CertificateError",
    "ConfigError",
    "ConvergenceError",
    "CrossDiffError",
    "DomainError",
    "EnsembleError",
    "FalsificationError",
    "ModelError",
    "StepError",
    "ModelParams",
    "GridSpec",
    "SpeciesField",
    "build_basis",
    "NoiseModel",
    "StepConfig",
    "run_path",
    "RunConfig",
    "parse_config",
    "load_config",
]
