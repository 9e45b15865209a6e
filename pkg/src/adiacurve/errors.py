"""Exception hierarchy shared by every adiacurve module."""


class AdiacurveError(Exception):
    """Base class for all errors raised by the package."""


class SpecError(AdiacurveError):
    """Malformed protocol spec, config or input file."""


class NotFound(SpecError, KeyError):
    """Unknown catalog name."""

    def __str__(self) -> str:
        return Exception.__str__(self)


class OutOfWindow(AdiacurveError, ValueError):
    """A time outside the protocol window ``[t_i, t_f]`` was requested."""

    def __init__(self, t: float, window: tuple[float, float]):
        super().__init__(f"t={t!r} outside window [{window[0]!r}, {window[1]!r}]")
        self.t = t
        self.window = window


class RegularityError(AdiacurveError):
    """The curve speed (adiabatic energy) vanishes: geometry is undefined there."""

    def __init__(self, message: str, t: float | None = None):
        if t is not None:
            message = f"{message} (at t={t:.12g})"
        super().__init__(message)
        self.t = t


class ToleranceNotMet(AdiacurveError):
    """The adaptive integrator could not reach the requested tolerance."""
