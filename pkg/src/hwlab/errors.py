"""Exception hierarchy shared by every module."""


class HWLabError(Exception):
    """Base class for all errors raised by hwlab."""


class ConfigError(HWLabError, ValueError):
    """Malformed input: bad shapes, parameters or configuration."""


class DimensionMismatch(ConfigError):
    pass


class NotSymmetric(ConfigError):
    pass


class InvalidConfig(ConfigError):
    pass


class InvalidParams(ConfigError):
    pass


class InsufficientSamples(ConfigError):
    pass


class EmptyWitnessSet(ConfigError):
    pass


class NumericalError(HWLabError, ArithmeticError):
    """An iterative method failed or the input is numerically degenerate."""


class NonConvergence(NumericalError):
    pass


class BisectionFailure(NumericalError):
    pass


class DegenerateCovariance(NumericalError):
    pass
