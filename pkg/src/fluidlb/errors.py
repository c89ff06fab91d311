"""Domain exceptions shared across the package."""


class FluidLBError(Exception):
    """Base class for all domain errors (CLI maps these to exit code 1)."""

    kind = "error"


class InfeasibleThroughputError(FluidLBError, ValueError):
    """Requested throughput at or above a backend's capacity."""

    kind = "infeasible-throughput"


class OverloadError(FluidLBError, ValueError):
    """A routing matrix pushes more flow into a backend than it can serve."""

    kind = "backend-overload"

    def __init__(self, backend: int, inflow: float, capacity: float):
        self.backend = backend
        self.inflow = inflow
        self.capacity = capacity
        super().__init__(
            f"backend {backend} overloaded: inflow {inflow:.6g} >= capacity {capacity:.6g}"
        )


class InfeasibleInstanceError(FluidLBError, ValueError):
    """No feasible routing exists (or none was found from the tried starts)."""

    kind = "infeasible-instance"


class ConvergenceError(FluidLBError, RuntimeError):
    """Iterative solver hit its iteration cap before reaching tolerance."""

    kind = "no-convergence"

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (final residual {residual:.3e})")


class DisconnectedGraphError(FluidLBError, ValueError):
    """The active-arc graph is disconnected where connectivity is required."""

    kind = "disconnected-graph"


class SimulationDivergedError(FluidLBError, RuntimeError):
    """Non-finite state detected during time integration."""

    kind = "simulation-diverged"

    def __init__(self, step: int, time: float):
        self.step = step
        self.time = time
        super().__init__(f"non-finite state at step {step} (t={time:.6g}s)")
