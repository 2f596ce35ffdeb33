"""Event-triggered adaptive variational filtering and its benchmark harness."""

from .baselines import KfState, clset_kf_step, kf_oracle_step, vbf_step
from .filter import (
    FilterConfig,
    FilterState,
    StepDiagnostics,
    etvbf_step,
    initial_state,
)
from .harness import (
    FILTER_IDS,
    ExperimentConfig,
    SweepRow,
    TrialRecord,
    compute_metrics,
    emit_outputs,
    run_sweep,
    run_trial,
)
from .model import ModelSpec, Trajectory, build_cv_scenario, scenario_defaults, simulate_truth
from .trigger import TriggerConfig, TriggerOutcome, sensor_decide, trigger_probability

__all__ = [
    "FILTER_IDS",
    "ExperimentConfig",
    "FilterConfig",
    "FilterState",
    "KfState",
    "ModelSpec",
    "StepDiagnostics",
    "SweepRow",
    "Trajectory",
    "TrialRecord",
    "TriggerConfig",
    "TriggerOutcome",
    "build_cv_scenario",
    "clset_kf_step",
    "compute_metrics",
    "emit_outputs",
    "etvbf_step",
    "initial_state",
    "kf_oracle_step",
    "run_sweep",
    "run_trial",
    "scenario_defaults",
    "sensor_decide",
    "simulate_truth",
    "trigger_probability",
    "vbf_step",
]

__version__ = "0.1.0"
