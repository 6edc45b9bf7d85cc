"""Exception types shared across the package."""


class CurveError(Exception):
    """Base class for all curvediff errors."""


class BadShape(CurveError):
    """Curve data has the wrong dimensions (n < 3, d < 2, ragged rows, ...)."""


class RegularityViolation(CurveError):
    """Two adjacent vertices coincide within the regularity threshold."""

    def __init__(self, message, edge_index=None, time=None):
        super().__init__(message)
        self.edge_index = edge_index
        self.time = time


class DomainViolation(CurveError):
    """Triangle apex placed at one of the two excluded base vertices."""


class SingularMetric(CurveError):
    """SPD factorization of the metric tensor failed (degenerate curve)."""


class StepTooLarge(CurveError):
    """Geodesic integrator energy drift exceeded its guard threshold."""


class EdgeCollapse(CurveError):
    """A simulated step produced an edge below the edge floor.

    The step index is attached by the simulation loop; em_step itself only
    knows the offending edge.
    """

    def __init__(self, message, edge_index, length, step=None):
        super().__init__(message)
        self.edge_index = edge_index
        self.length = length
        self.step = step
