"""Stability analysis and simulation of digital disturbance-observer motion control."""

from .analysis import classify, eigenvalues, frequency_response, root_locus, spectral_radius
from .loops import (
    FeedbackGains,
    build_inner_loop,
    build_outer_loop,
    inner_constraint,
    inner_tf,
    jordan_decompose,
    open_loop_tf,
    outer_spectrum_factored,
)
from .observer import ObserverConfig, Stability, gain_upper_bound
from .plant import ContinuousPlant, NominalPlant, zoh_discretize

__version__ = "0.1.0"

__all__ = [
    "ContinuousPlant",
    "NominalPlant",
    "zoh_discretize",
    "ObserverConfig",
    "Stability",
    "gain_upper_bound",
    "FeedbackGains",
    "build_inner_loop",
    "build_outer_loop",
    "inner_tf",
    "open_loop_tf",
    "inner_constraint",
    "jordan_decompose",
    "outer_spectrum_factored",
    "eigenvalues",
    "spectral_radius",
    "classify",
    "root_locus",
    "frequency_response",
]
