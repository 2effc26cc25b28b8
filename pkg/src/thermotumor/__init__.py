"""Finite-volume solver for a non-isothermal Cahn-Hilliard tumour-growth model with nutrient."""

from .constitutive import ModelParams, ParameterError
from .dynamics import SimState, StepConfig, StepFailure, StepRejected, advance
from .lattice import GridSpec, ScalarField

__all__ = [
    "GridSpec",
    "ModelParams",
    "ParameterError",
    "ScalarField",
    "SimState",
    "StepConfig",
    "StepFailure",
    "StepRejected",
    "advance",
]
__version__ = "0.1.0"
