"""Shared exception types."""


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


class DomainError(ValueError):
    """An operand is outside the mathematical domain of the operation."""


class NonFiniteError(ArithmeticError):
    """An operation produced NaN or Inf."""


class TrainingDiverged(RuntimeError):
    """Training hit a non-finite loss and was aborted."""


class IdxFormatError(ValueError):
    """An IDX file is malformed or truncated."""
