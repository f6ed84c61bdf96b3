"""Exception hierarchy shared by every module of the package."""


class GDClassifyError(Exception):
    """Base class for all package errors."""


class InputError(GDClassifyError, ValueError):
    """Invalid user-supplied data or configuration."""


class NumericalError(GDClassifyError, ArithmeticError):
    """A numerical procedure failed or produced a non-finite value."""


class NonPositiveComponent(InputError):
    def __init__(self, index, value):
        self.index = index
        self.value = value
        super().__init__(f"component {index} = {value!r} is not strictly inside (0, A)")


class SumMismatch(InputError):
    def __init__(self, total, scale):
        self.total = total
        self.scale = scale
        self.deviation = total - scale
        super().__init__(f"components sum to {total!r}, expected {scale!r} "
                         f"(deviation {self.deviation:.3e})")


class AllZeroInput(InputError):
    pass


class DegenerateRemainder(NumericalError):
    pass


class NonPositiveAlpha(InputError):
    pass


class EmptyAfterFiltering(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class DegenerateVariance(NumericalError):
    pass


class OutOfRange(InputError):
    pass


class SingularBlock(NumericalError):
    pass


class NoEffectiveData(InputError):
    pass


class NonFiniteObjective(NumericalError):
    pass


class StepRejected(NumericalError):
    pass


class WouldEmptyTree(GDClassifyError):
    pass


class ClassTooSmall(InputError):
    pass


class EmptyMatrix(InputError):
    pass


class SchemaError(InputError):
    """A persisted document has the wrong kind or an unsupported version."""
