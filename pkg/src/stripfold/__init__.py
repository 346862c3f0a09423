"""Feedback-based fabric strip folding lab: simulator, baselines, policy
search under material randomization, and a synthetic vision loop."""

from .params import StripParams, desk_scale_params, full_fidelity_params, min_damping
from .sim import (
    ForceReadout,
    SolverDivergence,
    StripState,
    TouchEvent,
    detect_desk_contact_x,
    detect_layer_touch,
    folded_height,
    init_flat,
    step,
)

__all__ = [
    "StripParams",
    "desk_scale_params",
    "full_fidelity_params",
    "min_damping",
    "StripState",
    "TouchEvent",
    "ForceReadout",
    "SolverDivergence",
    "init_flat",
    "step",
    "detect_desk_contact_x",
    "detect_layer_touch",
    "folded_height",
]

__version__ = "0.1.0"
