"""Experiment harness: configs, campaign runner, plot data and the CLI."""

from .config import ConfigError, ExperimentConfig, derive_seed
from .runner import CalibrationError, ResultRow, calibrate_noise, run_case

__all__ = ["CalibrationError", "ConfigError", "ExperimentConfig", "ResultRow", "calibrate_noise", "derive_seed", "run_case"]
