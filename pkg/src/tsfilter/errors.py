"""Exception types raised by the toolkit."""


class TSFError(Exception):
    """Base class for all toolkit errors."""


class NotInAlgebra(TSFError):
    """A matrix does not lie in the span of the algebra basis."""


class CutLocus(TSFError):
    """A rotation angle is too close to pi for a principal logarithm."""


class Singular(TSFError):
    """A matrix that must be inverted is numerically singular."""


class NotADerivation(TSFError):
    """A linear map fails the derivation law on basis pairs."""


class NotNormalCommuting(TSFError):
    """A matrix does not commute with its pseudo-inverse."""


class TagMismatch(TSFError):
    """Group elements from different groups or laws were combined."""


class NoConvergence(TSFError):
    """An iteration did not reach its tolerance."""


class CholeskyFail(TSFError):
    """A covariance stayed indefinite after jitter."""


class StepReject(TSFError):
    """A sigma point left the principal branch during propagation."""


class SingularInnovation(TSFError):
    """The innovation covariance could not be inverted."""


class PathEscape(TSFError):
    """A Monte-Carlo path reached the cut locus."""

    def __init__(self, message: str, count: int = 0):
        super().__init__(message)
        self.count = count
