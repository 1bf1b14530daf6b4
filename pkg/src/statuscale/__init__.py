"""Status-aware elastic scaling: load-status detection, hybrid vertical/horizontal control and simulation."""

from .detector import Status, StatusDetector, calibrate_lambda, fit_line
from .horizontal import Action, HorizontalConfig
from .predictor import GradientBoostedTrees, PredictorParams
from .profile import ServiceProfile
from .simulator import (
    CONTROLLERS,
    DetectorConfig,
    RunRecord,
    SimulationConfig,
    VerticalConfig,
    equalize_budgets,
    evaluate,
    run_experiment,
)
from .trace import WorkloadTrace, load_trace, standard_burst_trace, synthesize_trace
from .vertical import APidController, BpNetwork

__version__ = "0.1.0"

__all__ = [
    "Action", "APidController", "BpNetwork", "CONTROLLERS", "DetectorConfig", "GradientBoostedTrees",
    "HorizontalConfig", "PredictorParams", "RunRecord", "ServiceProfile", "SimulationConfig", "Status",
    "StatusDetector", "VerticalConfig", "WorkloadTrace", "calibrate_lambda", "equalize_budgets", "evaluate",
    "fit_line", "load_trace", "run_experiment", "standard_burst_trace", "synthesize_trace",
]
