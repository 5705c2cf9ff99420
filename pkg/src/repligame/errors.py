"""Exceptions raised by repligame."""


class OutOfRangeError(ValueError):
    """A rate value outside the range of the transition rate was inverted."""


class DimensionMismatchError(ValueError):
    """A vector does not match the number of grid cells."""


class IncomparableError(ValueError):
    """Two solutions live on different grids."""


class StabilityViolation(RuntimeError):
    """An explicit step may break nonnegativity or the value bound."""

    def __init__(self, inequality: str, lhs: float, message: str | None = None):
        self.inequality = inequality
        self.lhs = lhs
        super().__init__(message or f"stability condition violated: {inequality} (lhs = {lhs:.6g})")


class ConfigParseError(ValueError):
    """Malformed scenario document."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class ConfigValidationError(ValueError):
    """Scenario document parsed but violates an invariant."""
