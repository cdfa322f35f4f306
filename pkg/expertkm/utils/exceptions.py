# Custom Exception Classes
class ExpertKMError(Exception):
    """Base class for all expertkm errors."""
    pass


class ValidationError(ExpertKMError):
    """Raised when input validation fails."""

    def __init__(self, message: str, indices: list[int] | None = None):
        super().__init__(message)
        self.indices = list(indices or [])


class ConfigurationError(ExpertKMError):
    """Raised when an estimator lacks the expert information it needs."""
    pass


class KernelConstructionError(ValidationError):
    """Raised when a belief kernel cannot be normalized on [lower, inf)."""
    pass


class DomainError(ValidationError):
    """Raised when an observation lies outside a model's support."""
    pass


class NumericError(ExpertKMError):
    """Raised when a numeric routine fails."""
    pass


class DegenerateWeightError(NumericError):
    """Raised when an IPCW denominator 1 - G(W-) vanishes for a weighted point."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class DegenerateFitError(NumericError):
    """Raised when a fit has an empty numerator or denominator."""
    pass


class QuadratureError(NumericError):
    """Raised when adaptive quadrature does not converge."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class OptimizerError(NumericError):
    """Raised when the numeric maximizer cannot bracket or converge."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
