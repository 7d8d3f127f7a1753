"""Configuration-driven experiments and the command-line interface."""
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .runner import (BitsResult, ExperimentResult, InfeasibleParamsWarning, analyze_config,
                     bits_to_target, privacy_levels, run_experiment, sweep)

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "BitsResult",
           "ExperimentResult", "InfeasibleParamsWarning", "analyze_config", "bits_to_target",
           "privacy_levels", "run_experiment", "sweep"]
