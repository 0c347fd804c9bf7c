"""Smoothed retracking of altimetric waveform sequences.

Waveform models (Brown, numerically convolved, delay/Doppler), a
speckle simulator, a coordinate-descent marginal-MAP estimator with a
smoothness prior across echoes, a per-echo least-squares baseline, a hybrid
Gibbs / HMC posterior sampler, and the evaluation metrics.
"""
from .core import (
    EchoSequence,
    FitReport,
    HyperConfig,
    InstrumentConfig,
    NoiseState,
    ParamTrack,
    StopReason,
    ValidationError,
    validate,
)
from .models import ModelKind, WaveformModel, brown, ca_conv, dda, evaluate, jacobian
from .simulate import Scenario, default_scenario, generate
from .cd import IllConditionedFisher, fit, multistart
from .least_squares import fit_ls
from .hmc import ChainConfig, sample_posterior
from . import metrics

__all__ = [
    "EchoSequence", "FitReport", "HyperConfig", "InstrumentConfig", "NoiseState", "ParamTrack",
    "StopReason", "ValidationError", "validate", "ModelKind", "WaveformModel", "brown", "ca_conv",
    "dda", "evaluate", "jacobian", "Scenario", "default_scenario", "generate",
    "IllConditionedFisher", "fit", "multistart", "fit_ls", "ChainConfig", "sample_posterior", "metrics",
]

__version__ = "0.1.0"
