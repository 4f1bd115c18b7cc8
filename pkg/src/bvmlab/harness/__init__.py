"""Declarative experiment runner."""

from .analysis import RateFit, RateFitError, evaluate_checks, fit_loglog, rate_fit
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .runner import CoverageReport, aggregate, run, write_outputs

__all__ = [
    "ConfigError",
    "CoverageReport",
    "ExperimentConfig",
    "RateFit",
    "RateFitError",
    "aggregate",
    "evaluate_checks",
    "fit_loglog",
    "load_config",
    "parse_config",
    "rate_fit",
    "run",
    "write_outputs",
]
