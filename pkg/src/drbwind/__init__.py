"""Wind velocity profiling from the rigid-body response of a quadrotor.

Pipeline: identify decoupled linear sub-models from excitation flights,
assemble per-trim 12-state models, augment them with a constant-wind state,
run a steady-state observer over flight logs, and bin the wind estimates
into vertical profiles compared against reference series.
"""

from .models import (
    GammaPreset,
    LinearModel,
    PitchModel,
    PlungeModel,
    RollModel,
    TrimCondition,
    YawModel,
    assemble_model,
    extract_submodels,
    parameter_trend_fit,
)
from .observer import augment, design_gain, observability_rank, run_observer
from .simulator import FlightLog, SensorNoiseSpec, WindField, discretize, excitation_multisine, simulate

__version__ = "0.1.0"

__all__ = [
    "FlightLog",
    "GammaPreset",
    "LinearModel",
    "PitchModel",
    "PlungeModel",
    "RollModel",
    "SensorNoiseSpec",
    "TrimCondition",
    "WindField",
    "YawModel",
    "assemble_model",
    "augment",
    "design_gain",
    "discretize",
    "excitation_multisine",
    "extract_submodels",
    "observability_rank",
    "parameter_trend_fit",
    "run_observer",
    "simulate",
]
