"""Online detection of clustered changes in multivariate Hawkes networks."""

from .calibration import (
    CalibrationModel,
    fdr_estimate,
    gamma_covariance,
    tail_probability,
    threshold_for_alpha,
    threshold_for_arl,
)
from .errors import (
    CalibrationError,
    CheckpointError,
    ConfigurationError,
    HawkscanError,
    NumericalError,
    OrderingError,
)
from .fit import FitOptions, FitResult, fit_mle
from .glr import GlrConfig, GlrMonitor, em_fit, glr_stat, run_glr_monitor
from .model import ChangeScenario, EventStream, HawkesModel, intensity, log_likelihood
from .scan import Cluster, ClusterSet, DetectionResult, MonitorConfig, ScanMonitor, run_monitor
from .score import EdgeSet, FisherInfo, ScoreState, fisher_closed_form, fisher_estimate
from .simulate import HawkesSampler, make_rng, simulate, simulate_with_change

__version__ = "0.1.0"

__all__ = [
    "CalibrationError",
    "CalibrationModel",
    "ChangeScenario",
    "CheckpointError",
    "Cluster",
    "ClusterSet",
    "ConfigurationError",
    "DetectionResult",
    "EdgeSet",
    "EventStream",
    "FisherInfo",
    "FitOptions",
    "FitResult",
    "GlrConfig",
    "GlrMonitor",
    "HawkesModel",
    "HawkesSampler",
    "HawkscanError",
    "MonitorConfig",
    "NumericalError",
    "OrderingError",
    "ScanMonitor",
    "ScoreState",
    "em_fit",
    "fdr_estimate",
    "fisher_closed_form",
    "fisher_estimate",
    "fit_mle",
    "gamma_covariance",
    "glr_stat",
    "intensity",
    "log_likelihood",
    "make_rng",
    "run_glr_monitor",
    "run_monitor",
    "simulate",
    "simulate_with_change",
    "tail_probability",
    "threshold_for_alpha",
    "threshold_for_arl",
]
