"""Exception hierarchy shared across the package."""


class MultiflatError(Exception):
    """Base class for all library errors."""


class DimensionError(MultiflatError):
    """Inputs with inconsistent dimensions."""


class ParameterError(MultiflatError):
    """Invalid or out-of-range model/special-function parameters."""


class DomainError(MultiflatError):
    """Evaluation requested outside the supported domain."""


class SingularityError(MultiflatError):
    """A pole, coincident coordinates, or step-size collapse was hit.

    ``last_t`` carries the last good integration abscissa when the error
    is raised by the ODE integrator.
    """

    def __init__(self, message, last_t=None):
        super().__init__(message)
        self.last_t = last_t


class InconsistencyError(MultiflatError):
    """A quantity that must be conserved along a trajectory drifted.

    Raised when a reduction constant, monitored along the integrated
    flow, fails its constancy check; usually a sign that the input
    trajectory does not actually solve the flow.
    """


class InvertibilityError(MultiflatError):
    """An operator that must be invertible is (numerically) singular."""


class ReconstructionError(MultiflatError):
    """A stage of an algebraic reconstruction failed; the message names it."""


class AmbiguousSignError(ReconstructionError):
    """Both global sign choices fit the data about equally well."""


class DegenerateMuError(ReconstructionError):
    """The quadratic fixing the reconstruction variable vanishes identically.

    This is the signature of the exceptional linear family, where a
    one-parameter family of states shares the same reduced data.
    """
