"""Mean-field laser master equation: deterministic, Lorenz and stochastic routes."""

from .hilbert import SpaceDescriptor, build_operators, trace_distance
from .lindblad import DESK_PARAMS, LaserParams, MeanFieldDrive, build_gksl
from .lorenz import LorenzState, integrate_lorenz

__all__ = [
    "DESK_PARAMS",
    "LaserParams",
    "LorenzState",
    "MeanFieldDrive",
    "SpaceDescriptor",
    "build_gksl",
    "build_operators",
    "integrate_lorenz",
    "trace_distance",
]
