"""Exception hierarchy shared by the solvers and the command line."""


class BridgeError(Exception):
    """Base class for all solver-level failures."""


class BoundaryError(BridgeError, ValueError):
    """A matrix or vector lies on (or numerically at) the boundary of its cone.

    The Hilbert metric is infinite there, so such inputs are rejected instead
    of being silently regularized.
    """


class InfiniteDiameterError(BridgeError, ValueError):
    """A kernel has zero entries, so its projective diameter is infinite."""


class NotPositivityImprovingError(BridgeError, ValueError):
    """A Kraus map sends some density matrix to the boundary of the cone.

    ``witness`` holds a pair ``(v, w)`` with ``w^H E_i v = 0`` for every
    coefficient when one is known, and ``iterate`` the offending matrix when
    the failure was detected inside a fixed-point loop.
    """

    def __init__(self, message, witness=None, iterate=None):
        super().__init__(message)
        self.witness = witness
        self.iterate = iterate


class ConvergenceError(BridgeError):
    """The fixed-point iteration hit ``max_iter`` before reaching ``tol``.

    The partial :class:`~bridgekit.report.SolveReport` is attached so callers
    can still inspect the residual trace.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class VerificationError(BridgeError):
    """Converged potentials failed the a-posteriori residual checks."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals or {}
