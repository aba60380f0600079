"""Exception types shared across the package."""


class MLSIError(Exception):
    """Base class for every error raised by mlsi_lab."""


class CapacityError(MLSIError):
    """The requested computation exceeds what the brute-force paths support."""


class NoAnalyticConjugate(MLSIError, ValueError):
    pass


class UntrustedDualRange(MLSIError, ValueError):
    """A conjugate was requested outside the range certified by its grid."""


class NonFiniteIntegrand(MLSIError, FloatingPointError):
    def __init__(self, message, node=None):
        super().__init__(message if node is None else f"{message} at node {node!r}")
        self.node = node


class NonDecayingIntegrand(MLSIError, ValueError):
    """e^g does not vanish on the boundary of a truncation box."""


class TruncationError(MLSIError, ValueError):
    pass


class SingularHessian(MLSIError, ValueError):
    def __init__(self, message, node=None):
        super().__init__(message if node is None else f"{message} at node {node!r}")
        self.node = node


class InfeasibleSelection(MLSIError, ValueError):
    """No grid value satisfies a constant-selection condition."""


class SupNotLocalized(MLSIError, RuntimeError):
    """The inner maximizer of a sup-convolution sits on the search-grid boundary."""


class ScenarioSkipped(MLSIError):
    """A check's preconditions put the instance outside the range the inequality covers."""

    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason
