"""Exception types shared across flowlab modules."""


class FlowlabError(Exception):
    """Base class for all flowlab errors."""


class ValidationError(FlowlabError, ValueError):
    """Rejected input: non-finite samples, bad shapes, malformed parameters."""


class DimensionError(ValidationError):
    pass


class DomainError(ValidationError):
    """Argument outside the domain of the operation (e.g. t <= 0 for the heat kernel)."""


class SingularityError(DomainError):
    pass


class GeometryError(ValidationError):
    pass


class ParityError(ValidationError):
    pass


class ParameterError(ValidationError):
    """Solver parameters violate a stability bound (CFL and friends)."""


class DataError(ValidationError):
    """Not enough data (snapshots, samples) for the requested diagnostic."""


class FitError(DataError):
    pass


class SolverError(FlowlabError, RuntimeError):
    """A numerical solve failed to converge; carries the last residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class AccuracyError(SolverError):
    pass


class DecompositionError(SolverError):
    pass
