"""Exception hierarchy shared by all modules."""


class ThpNomaError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(ThpNomaError, ValueError):
    """Invalid system or experiment configuration."""


class DimensionError(ThpNomaError, ValueError):
    """Vectors or matrices with incompatible shapes."""


class DecompositionError(ThpNomaError, ValueError):
    """A factorization was requested for a rank-deficient input."""


class DegenerateGainError(ThpNomaError, ValueError):
    """An effective channel gain is (numerically) zero."""


class PreconditionError(ThpNomaError, ValueError):
    """An operation's documented precondition does not hold."""


class AmbiguousDecodeError(ThpNomaError):
    """Two or more constellation centroids with different labels are equally close."""


class DegenerateInitializationError(ThpNomaError, ValueError):
    """A slack variable would be initialized from a log of a (near) zero quantity."""


class SolverError(ThpNomaError, RuntimeError):
    """A conic subproblem could not be solved to the requested accuracy.

    Parameters
    ----------
    message : str
        Human readable description.
    status : str, optional
        Status reported by the conic solver.
    iteration : int, optional
        SCA iteration at which the failure happened.
    cluster : int, optional
        Cluster index (0-based) when the failure belongs to one cluster.
    """

    def __init__(self, message, status=None, iteration=None, cluster=None):
        super().__init__(message)
        self.status = status
        self.iteration = iteration
        self.cluster = cluster


class InfeasibleError(ThpNomaError):
    """The design problem has no feasible point.

    ``constraint`` names the violated family (e.g. ``"strong_snr"``) and
    ``cluster`` the offending cluster, when known.
    """

    def __init__(self, message, constraint=None, cluster=None, violation=None):
        super().__init__(message)
        self.constraint = constraint
        self.cluster = cluster
        self.violation = violation
