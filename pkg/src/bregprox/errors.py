"""Exception and warning types raised by bregprox."""


class BregproxError(ValueError):
    """Base class for all domain errors."""


class UnknownKernel(BregproxError):
    pass


class RegionOutsideDomain(BregproxError):
    pass


class MappingUndefined(BregproxError):
    pass


class ImproperFunction(BregproxError):
    """Raised when a sampled function has no finite value (or stores -inf/nan)."""


class ZeroNotInGrid(BregproxError):
    pass


class EmptyCommonDomain(BregproxError):
    pass


class NonPositiveLambda(BregproxError):
    pass


class BasePointOutsideU(BregproxError):
    pass


class PointOutsideSumDomain(BregproxError):
    pass


class EmptySet(BregproxError):
    pass


class NonconvexInput(BregproxError):
    pass


class NonconvexInputForAnisotropicForm(NonconvexInput):
    pass


class ThresholdViolated(BregproxError):
    pass


class AssumptionWarning(UserWarning):
    """A kernel or input violates a standing assumption; results may still be useful."""
