"""Exception hierarchy shared across the package."""


class CQEError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgument(CQEError, ValueError):
    pass


class InvalidState(CQEError, RuntimeError):
    pass


class SchemaError(CQEError, ValueError):
    pass


class UndefinedMetric(CQEError, ValueError):
    """A metric has no defined value for the given input (e.g. one class only)."""


class NumericFailure(CQEError, ArithmeticError):
    """Non-finite values showed up in a loss, gradient or parameter.

    ``last_good_epoch`` is set by the training loop: the index of the last
    epoch that finished with a finite loss, or -1 if none did.
    """

    def __init__(self, message, last_good_epoch=None):
        super().__init__(message)
        self.last_good_epoch = last_good_epoch
