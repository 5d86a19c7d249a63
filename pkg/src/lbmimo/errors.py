"""Exception hierarchy shared by the library and the CLI."""


class LbmimoError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(LbmimoError, ValueError):
    """Invalid system geometry or experiment description."""


class NumericalError(LbmimoError, ArithmeticError):
    """A factorization failed or produced unusable output."""

    def __init__(self, message, shape=None):
        if shape is not None:
            message = f"{message} (matrix shape {shape[0]}x{shape[1]})"
        super().__init__(message)
        self.shape = shape


class DegenerateChannelError(NumericalError):
    """An effective channel is too ill-conditioned to invert.

    Monte Carlo callers catch this and redraw the realization.
    """

    def __init__(self, message, user=None, condition=None):
        super().__init__(message)
        self.user = user
        self.condition = condition
