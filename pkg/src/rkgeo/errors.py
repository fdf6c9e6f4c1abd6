"""Exception hierarchy shared by all modules."""


class RKGeoError(Exception):
    """Base class for every error raised by rkgeo."""


class ConfigError(RKGeoError):
    """Malformed configuration document or expression."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        loc = ""
        if line is not None:
            loc = f" (line {line}, column {column})"
        elif column is not None:
            loc = f" (column {column})"
        super().__init__(message + loc)


class ExprSyntaxError(ConfigError):
    pass


class DomainError(RKGeoError):
    """Point outside the manifold's domain bounds."""


class ParameterError(RKGeoError, ValueError):
    pass


class NumericalError(RKGeoError):
    """Singular or near-singular linear algebra."""

    def __init__(self, message, condition=None):
        self.condition = condition
        super().__init__(message)


class AdmissibilityError(RKGeoError):
    """A velocity or control violates the admissibility constraints."""

    def __init__(self, message, index=None):
        self.index = index
        super().__init__(message)


class UnsupportedWindError(RKGeoError):
    """Wind with g0(W, W) > 1 somewhere on the domain."""


class ParametrizationError(RKGeoError):
    pass


class DegenerateInputError(RKGeoError):
    pass


class InsufficientDataError(RKGeoError):
    pass


class AccuracyError(RKGeoError):
    """Conservation monitor breached during integration."""

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(message)


class NonintegrabilityError(RKGeoError):
    """omega ^ d(omega) vanishes somewhere on the sampled domain."""


class HypothesisViolation(RKGeoError):
    """Input violates a hypothesis required by the method."""


class ShootingFailure(RKGeoError):
    """Newton shooting did not converge.

    ``kind`` is one of ``"diverged"``, ``"conjugate-like"`` or ``"integration"``.
    """

    def __init__(self, message, kind="diverged", last_iterate=None, residual=None):
        self.kind = kind
        self.last_iterate = last_iterate
        self.residual = residual
        super().__init__(message)


class ReachFailure(RKGeoError):
    """Reachability search exhausted its budget."""

    def __init__(self, message, best_distance=None, best_signal=None):
        self.best_distance = best_distance
        self.best_signal = best_signal
        super().__init__(message)
