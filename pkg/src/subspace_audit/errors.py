"""Exception types shared across the package."""


class AuditError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(AuditError):
    """Input data does not match the declared schema (missing columns, bad file format)."""


class EmptyInputError(AuditError):
    """No usable records: empty source, zero-total histogram, or empty subgroup."""


class AlignmentError(AuditError):
    """Two histograms were built with incompatible binning schemes."""


class BudgetError(AuditError):
    """Requested sample count is outside the feasible range."""


class ParameterError(AuditError):
    """A numeric parameter or option is outside its documented range."""


class SupportSizeError(AuditError):
    """Exact transport was requested on supports too large to solve directly."""


class ConvergenceError(AuditError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual
