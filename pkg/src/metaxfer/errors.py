"""Shared exception types."""


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


class NumericError(ArithmeticError):
    """An operation produced NaN or Inf."""


class ContractError(ValueError):
    """A caller violated an operation's precondition."""


class ParseError(ValueError):
    """A data file is malformed."""
