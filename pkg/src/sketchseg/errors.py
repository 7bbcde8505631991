"""Exception types raised across the package."""


class SketchSegError(Exception):
    """Base class for all library errors."""


class UnsupportedFormat(SketchSegError, ValueError):
    pass


class DimensionMismatch(SketchSegError, ValueError):
    pass


class DomainError(SketchSegError, ValueError):
    pass


class InvalidBlockSize(SketchSegError, ValueError):
    pass


class DegenerateComponent(SketchSegError, ValueError):
    pass


class SingularFit(SketchSegError, ArithmeticError):
    """Normal equations of a Bezier fit are rank deficient."""


class EmptySketch(SketchSegError, ValueError):
    pass


class ZeroNormRow(SketchSegError, ValueError):
    pass


class NonFiniteCost(SketchSegError, ValueError):
    pass


class UnsupportedInstance(SketchSegError, ValueError):
    pass


class EmptyInput(SketchSegError, ValueError):
    pass


class DegenerateInput(SketchSegError, ValueError):
    pass
