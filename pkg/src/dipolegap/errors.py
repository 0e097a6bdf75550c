"""Exception types raised across the toolkit."""


class DipoleGapError(Exception):
    """Base class for all toolkit errors."""


class PreconditionViolated(DipoleGapError, ValueError):
    pass


# potentials
class SingularPoint(DipoleGapError, ValueError):
    pass


class OutsideValidity(DipoleGapError, ValueError):
    pass


class EmptyDistribution(DipoleGapError, ValueError):
    pass


class ToleranceAmbiguous(DipoleGapError):
    def __init__(self, l, m, value, tol):
        super().__init__(
            f"moment q[{l},{m}] = {value:.3e} is within the ambiguity band of tol={tol:.3e}"
        )
        self.l, self.m, self.value, self.tol = l, m, value, tol


class ViolationDetected(DipoleGapError):
    pass


# mathieu
class NoConvergence(DipoleGapError):
    pass


class SignAmbiguous(DipoleGapError):
    pass


class IndexOutOfRange(DipoleGapError, IndexError):
    pass


# forms
class ChannelNotNegative(UserWarning):
    """Channel with a nonnegative Mathieu eigenvalue cannot certify bound states."""


class SupportTouchesSingularity(DipoleGapError, ValueError):
    pass


class TargetNotReached(DipoleGapError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


# spectrum
class GridTooCoarse(DipoleGapError, ValueError):
    pass


class NoNegativeChannel(DipoleGapError):
    pass


class GridRangeTooSmall(DipoleGapError):
    pass


class PollutionSuspected(DipoleGapError):
    pass


class TruncationTooSmall(DipoleGapError):
    pass


class ChannelBudgetExceeded(DipoleGapError):
    pass


class TooFewLevels(DipoleGapError, ValueError):
    pass


# bounds
class DomainError(DipoleGapError, ValueError):
    pass


class NotIntegrable(DipoleGapError, ValueError):
    pass


NonIntegrable = NotIntegrable


class NotSmoothEnough(DipoleGapError, ValueError):
    pass


class QuadratureFailure(DipoleGapError):
    pass


class BadBumpSupport(DipoleGapError, ValueError):
    pass


class CouplingTooLarge(DipoleGapError, ValueError):
    pass


class PointChargesOnly(DipoleGapError, ValueError):
    pass


# cli
class ConfigError(DipoleGapError):
    pass


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError, ValueError):
    def __init__(self, field, reason):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason


class TaskFailed(DipoleGapError):
    def __init__(self, name, cause):
        super().__init__(f"task {name!r} failed: {cause}")
        self.name = name
        self.cause = cause
