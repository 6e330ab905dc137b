from .chains import ChainBelief, GaussianChain, smooth_chain
from .engine import (
    CoupledModelSpec,
    InferenceError,
    Posteriors,
    VmpSchedule,
    bethe_free_energy,
    continue_spec,
    infer_frame,
    vmp_message_ar,
)
from .observed import ArObservationModel, ArObservedFit, fit_ar_observed

__all__ = [
    "ArObservationModel",
    "ArObservedFit",
    "ChainBelief",
    "CoupledModelSpec",
    "GaussianChain",
    "InferenceError",
    "Posteriors",
    "VmpSchedule",
    "bethe_free_energy",
    "continue_spec",
    "fit_ar_observed",
    "infer_frame",
    "smooth_chain",
    "vmp_message_ar",
]
