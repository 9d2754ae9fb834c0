"""Exception and warning types shared across the package."""


class PropfitError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(PropfitError):
    """Model evaluated at a point outside its valid domain."""


class NonFiniteError(PropfitError):
    """A computed quantity came out NaN or infinite."""


class SingularError(PropfitError):
    """A matrix required to be invertible is numerically singular."""


class ZeroMeanError(PropfitError):
    """The mean function is zero at an observation, so relative quantities are undefined."""


class ZeroResponseError(PropfitError):
    """An observed response is zero (or nonpositive) where 1/y**2 weights are required."""


class DegenerateError(PropfitError):
    """The relative-error scale collapsed to zero on data that is not an exact fit."""


class NoBracketError(PropfitError):
    """No sign change found when scanning for a curve-intersection root."""


class TangencyError(PropfitError):
    """The two curves meet tangentially; the intersection dose is not locally identifiable."""


class ModeError(PropfitError):
    """Requested two-curve fitting mode is invalid for the chosen method."""


class ConfigError(PropfitError):
    """Invalid run configuration or input table."""


class Rejected(Exception):
    """Flow control: a simulated dataset violated the positivity constraint.

    Not a subclass of :class:`PropfitError`; callers of the generator catch
    it and redraw (counting the rejection), they never surface it.
    """


class MultipleRootWarning(UserWarning):
    """The intersection scan found more than one root; the one closest to zero was returned."""


class DerivativeNoiseWarning(UserWarning):
    """Curvature weights were computed from doubly finite-differenced Hessians."""
