"""Exception hierarchy shared by every module."""


class LabError(Exception):
    """Base class for all errors raised by emergelab."""


class ConfigurationError(LabError, ValueError):
    """Inconsistent shapes, invalid parameters or malformed input files.

    ``path`` locates the offending field of a config document (``$.params.grid.n``).
    """

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class DomainError(LabError, ValueError):
    """A formula was evaluated outside the region where it is real or defined."""


class NumericalError(LabError, ArithmeticError):
    """A computation produced non-finite values or failed to converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class StabilityError(NumericalError):
    """An explicit step violates its stability bound."""

    def __init__(self, message, suggested_dt=None, diagnostics=None):
        super().__init__(message, diagnostics)
        self.suggested_dt = suggested_dt


class NodeError(NumericalError):
    """Density dropped below the positivity floor, so phase and Madelung maps are undefined."""


class TuningError(LabError):
    """Bounded search for learning parameters failed."""
