"""sqzstat: weak-squeezing determination from photon statistics.

Simulates photon time-tag streams from a below-threshold OPO, builds the
Hanbury-Brown-Twiss g2(tau) histogram, fits the comb model to extract
cavity parameters, and inverts the g2(0) relation into a squeezing
parameter with Monte Carlo error bars.
"""

from .correlate import CorrelationHistogram, correlate, g2_at_zero, normalize
from .estimate import (
    EstimationConfig,
    SqueezingEstimate,
    UncertainInputs,
    estimate_squeezing,
    propagate_uncertainty,
)
from .fits import (
    RatePoint,
    VariancePoint,
    fit_comb,
    fit_g2_hyperbola,
    fit_rate_linear,
    fit_variance_curve,
    initial_guess_comb,
)
from .lm import FitResult, fit_nonlinear
from .opo import (
    AnalysisFrequency,
    CavityParams,
    CombModelParams,
    DetectionEfficiencyHD,
    PumpCalibration,
    QuadratureVariances,
    SPEED_OF_LIGHT,
    comb_model_eval,
    default_mode_cutoff,
    derive_cavity_rates,
    detected_variances,
    downconversion_rate_from_epsilon,
    epsilon_rate_from_g2zero,
    g2zero_from_pump,
    pump_from_g2zero,
    quadrature_variances,
    threshold_power,
    to_decibel,
)
from .pipeline import Report, run_pipeline
from .simulate import (
    DetectorModel,
    SimConfig,
    TimeTagStream,
    TruthRecord,
    apply_detector,
    expected_g2_peak,
    resolution_for_target_g2,
    simulate,
)
from .tagio import read_tags, write_tags

__version__ = "0.1.0"

__all__ = [
    "AnalysisFrequency",
    "CavityParams",
    "CombModelParams",
    "CorrelationHistogram",
    "DetectionEfficiencyHD",
    "DetectorModel",
    "EstimationConfig",
    "FitResult",
    "PumpCalibration",
    "QuadratureVariances",
    "RatePoint",
    "Report",
    "SPEED_OF_LIGHT",
    "SimConfig",
    "SqueezingEstimate",
    "TimeTagStream",
    "TruthRecord",
    "UncertainInputs",
    "VariancePoint",
    "apply_detector",
    "comb_model_eval",
    "correlate",
    "default_mode_cutoff",
    "derive_cavity_rates",
    "detected_variances",
    "downconversion_rate_from_epsilon",
    "epsilon_rate_from_g2zero",
    "estimate_squeezing",
    "expected_g2_peak",
    "fit_comb",
    "fit_g2_hyperbola",
    "fit_nonlinear",
    "fit_rate_linear",
    "fit_variance_curve",
    "g2_at_zero",
    "g2zero_from_pump",
    "initial_guess_comb",
    "normalize",
    "propagate_uncertainty",
    "pump_from_g2zero",
    "quadrature_variances",
    "read_tags",
    "resolution_for_target_g2",
    "run_pipeline",
    "simulate",
    "threshold_power",
    "to_decibel",
    "write_tags",
]
