"""Named experiments, their configuration and report emission."""

from .config import EXPERIMENTS, ExperimentConfig, load_config
from .report import ExperimentReport, Series, Verdict
from .runners import (
    RUNNERS,
    run_drift_stability,
    run_experiment,
    run_flow_stats,
    run_ic_stability,
    run_noise_regularization_demo,
    run_persistence,
    run_uniqueness_agreement,
    run_weak_residual,
)

__all__ = [
    "EXPERIMENTS", "ExperimentConfig", "load_config", "ExperimentReport", "Series", "Verdict", "RUNNERS",
    "run_experiment", "run_persistence", "run_noise_regularization_demo", "run_uniqueness_agreement",
    "run_ic_stability", "run_drift_stability", "run_weak_residual", "run_flow_stats",
]
