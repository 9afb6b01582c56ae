"""Exception hierarchy shared by all modules."""

import numpy as np


class MajorantGNError(Exception):
    """Base class for every error raised by this package."""


class RankDeficient(MajorantGNError, np.linalg.LinAlgError):
    """Operator is not injective at the requested tolerance."""


class NotSquare(MajorantGNError, ValueError):
    pass


class PerturbationTooLarge(MajorantGNError, ValueError):
    pass


class Infeasible(MajorantGNError, ValueError):
    """Hypotheses of the local convergence result are violated.

    ``conditions`` names each violated hypothesis (e.g. ``"h3"``).
    """

    def __init__(self, message, conditions=()):
        super().__init__(message)
        self.conditions = tuple(conditions)


class InvalidMajorant(MajorantGNError, ValueError):
    pass


class DomainExceeded(MajorantGNError, ValueError):
    pass


class OutOfBall(MajorantGNError, ValueError):
    pass


class TargetUnreachable(MajorantGNError, ValueError):
    pass


class SingularPreconditioner(MajorantGNError, np.linalg.LinAlgError):
    pass


class ForcingViolation(MajorantGNError, ValueError):
    pass


class StationaryPointMissing(MajorantGNError, ValueError):
    pass


class TraceFormatError(MajorantGNError, ValueError):
    pass
