"""Exception hierarchy.

The CLI maps these onto exit codes: ``ConfigError`` -> 2,
``InputDataError`` -> 3, any other ``NormLabError`` -> 4.
"""


class NormLabError(Exception):
    """Base class for every error raised by normlab."""


class ConfigError(NormLabError, ValueError):
    pass


class InputDataError(NormLabError, ValueError):
    pass


class NumericError(NormLabError, ArithmeticError):
    """A numeric precondition or computation failed."""


class DimensionError(NumericError, ValueError):
    pass


class ShapeError(NumericError, ValueError):
    pass


class DegenerateInputError(NumericError, ValueError):
    pass


class InvalidInputError(NumericError, ValueError):
    """Non-finite entries or an out-of-range argument."""


class EmptySetError(NumericError, ValueError):
    pass


class PoleError(NumericError):
    """``h_norm + c cos(phi) <= 0``: the rotation would pass pi/2."""


class RegimeError(NumericError, ValueError):
    """An angle lies outside the small-rotation regime the formulas cover."""


class ConvergenceError(NumericError):
    pass
