class D3pgError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(D3pgError, ValueError):
    pass


class ShapeError(D3pgError, ValueError):
    pass


class RangeError(D3pgError, ValueError):
    pass


class NumericError(D3pgError, ArithmeticError):
    pass


class CompatibilityError(D3pgError, ValueError):
    pass
