"""Exception hierarchy shared by all gatewave modules."""


class GatewaveError(Exception):
    """Base class for every error raised by the package."""


class OverlapError(GatewaveError, ValueError):
    """Push-pull conduction intervals would overlap (duty_high + duty_low < 1)."""


class NewtonDivergence(GatewaveError):
    def __init__(self, message, iterations=None, last_norm=None):
        super().__init__(message)
        self.iterations = iterations
        self.last_norm = last_norm


class StepUnderflow(GatewaveError):
    pass


class NoSteadyState(GatewaveError):
    pass


class SingularCapacitance(GatewaveError):
    pass


class IncompleteCycle(GatewaveError):
    pass


class GridMismatch(GatewaveError):
    pass


class ParseError(GatewaveError):
    pass


class ValidationError(GatewaveError, ValueError):
    """A config key failed validation."""

    def __init__(self, key, reason):
        super().__init__(f"{key}: {reason}")
        self.key = key
        self.reason = reason


class UnknownPreset(GatewaveError):
    pass


class BadParamPath(GatewaveError):
    pass


class EmptyData(GatewaveError):
    pass
