"""Experiment orchestration: scenario libraries, leave-one-out evaluation, ablation, reports."""

from .config import ConfigError, DatasetSource, ExperimentConfig
from .experiment import (
    METHODS, CostRow, ReportBundle, ScenarioRow, ablation_cells, check_loo_hygiene,
    run_ablation, run_loo_experiment,
)
from .library import (
    ScenarioLibrary, ScenarioRecord, generate_library, load_library, plan_tasks, save_library,
)
from .report import emit_report, load_report

__all__ = [
    "ConfigError", "DatasetSource", "ExperimentConfig", "METHODS", "CostRow", "ReportBundle",
    "ScenarioRow", "ablation_cells", "check_loo_hygiene", "run_ablation", "run_loo_experiment",
    "ScenarioLibrary", "ScenarioRecord", "generate_library", "load_library", "plan_tasks",
    "save_library", "emit_report", "load_report",
]
