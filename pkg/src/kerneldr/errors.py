class KernelDRError(ValueError):
    """Base class for all errors raised by kerneldr."""


class InvalidInputError(KernelDRError):
    pass


class OutOfBoundsError(KernelDRError):
    """A point violates the (delta, rho) magnitude/resolution bounds."""


class UndefinedStatisticError(KernelDRError):
    pass
