"""Exception types. Each maps to a CLI exit code in :mod:`anisotv.cli`."""


class AnisoTVError(Exception):
    exit_code = 1


class SamplingBudgetExceeded(AnisoTVError):
    """Generic polar sweep did not converge to the declared tolerance."""


class AmbiguousIncidence(AnisoTVError):
    """A measure support runs within tolerance of a shape boundary without lying on it."""


class QuadratureNonConvergence(AnisoTVError):
    pass


class LevelOutOfRange(AnisoTVError, ValueError):
    pass


class TooLargeForExhaustive(AnisoTVError, ValueError):
    pass


class TooLarge(AnisoTVError, ValueError):
    pass


class NotConverged(AnisoTVError):
    exit_code = 3

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class UnboundedDetected(AnisoTVError):
    exit_code = 3


class UnknownScenario(AnisoTVError, KeyError):
    exit_code = 2


class ConfigError(AnisoTVError, ValueError):
    exit_code = 2
