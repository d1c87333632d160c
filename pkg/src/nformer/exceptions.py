"""Exception types shared across the package."""


class NFormerError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(NFormerError, ValueError):
    """Operand dimensions or structure are inconsistent with the operation."""


class ParameterError(NFormerError, ValueError):
    """A scalar parameter is outside its valid range."""


class NonFiniteInputError(NFormerError, ValueError):
    """Input contains NaN or infinite entries."""


class DegenerateInputError(NFormerError, ValueError):
    """Input contains a near-zero row or column that cannot be normalized."""


class ConvergenceError(NFormerError, RuntimeError):
    """An iterative solver exhausted its budget.

    The remaining residual is kept on the ``defect`` attribute so callers
    can report how far the solve was from converging.
    """

    def __init__(self, message: str, defect: float | None = None):
        super().__init__(message)
        self.defect = defect


class UndefinedCosineError(NFormerError, ValueError):
    """Cosine similarity is undefined because an operand has zero norm."""


class ConfigError(NFormerError, ValueError):
    """Configuration is inconsistent with the supplied weights or data."""


class DataFormatError(NFormerError, ValueError):
    """A file does not conform to the expected on-disk format."""
