"""Exception types shared across the package."""


class TcodeError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(TcodeError, ValueError):
    """An argument is outside its valid domain."""


class ConfigurationError(ParameterError):
    """A run configuration is inconsistent or incomplete."""


class TopologyError(ParameterError):
    """A network description violates a structural requirement."""


class SaturationError(TcodeError, ValueError):
    """Requested operating point is at or beyond channel saturation."""


class SchedulingError(TcodeError, RuntimeError):
    """Event calendar misuse, e.g. scheduling into the past."""
