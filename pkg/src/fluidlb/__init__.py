"""Fluid-model load balancing over bipartite networks with latencies."""

from .errors import (
    ConvergenceError,
    DisconnectedGraphError,
    FluidLBError,
    InfeasibleInstanceError,
    InfeasibleThroughputError,
    OverloadError,
    SimulationDivergedError,
)
from .network import Network
from .rates import AffineRate, HyperbolicRate, ProcessingRate, SqrtRate

__all__ = [
    "AffineRate",
    "ConvergenceError",
    "DisconnectedGraphError",
    "FluidLBError",
    "HyperbolicRate",
    "InfeasibleInstanceError",
    "InfeasibleThroughputError",
    "Network",
    "OverloadError",
    "ProcessingRate",
    "SimulationDivergedError",
    "SqrtRate",
]

__version__ = "0.1.0"
