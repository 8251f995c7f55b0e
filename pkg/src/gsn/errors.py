"""Exception hierarchy shared by all gsn modules."""


class GsnError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(GsnError, ValueError):
    """Operands have incompatible shapes; the message names both."""


class ParameterError(GsnError, ValueError):
    """A scalar parameter is outside its legal range."""


class DomainError(GsnError, ValueError):
    """An input value is outside the domain an operation supports."""


class UnsupportedCorruptorError(GsnError, TypeError):
    """The requested operation is not defined for this corruptor kind."""


class ErgodicityError(GsnError, ValueError):
    """A transition matrix is reducible or periodic."""


class IterationLimitError(GsnError, RuntimeError):
    """An iterative solver hit its iteration cap before converging."""


class DegenerateSupportError(GsnError, ValueError):
    """A conditioning event has zero probability under the model."""


class NumericalError(GsnError, ArithmeticError):
    """A numerically singular or near-degenerate system was encountered."""


class TrainingDiverged(GsnError, RuntimeError):
    """Training produced a non-finite loss; diagnostics attached.

    The ``diagnostics`` dict carries the epoch, the index of the offending
    example, and the learning rate in effect when divergence was detected.
    """

    def __init__(self, message, diagnostics):
        super().__init__(message)
        self.diagnostics = dict(diagnostics)


class ConfigError(GsnError, ValueError):
    """A run configuration file is malformed or references missing paths."""


class IdxFormatError(GsnError, ValueError):
    """A data file does not start with a recognized IDX magic number."""


class IdxLengthError(GsnError, ValueError):
    """An IDX payload is shorter than its header promises."""


class RangeError(GsnError, ValueError):
    """A value lies outside the range an output format can represent."""
