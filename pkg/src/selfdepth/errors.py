"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible and not broadcastable."""


class ContractError(ValueError):
    """An operation precondition was violated."""


class NonFiniteError(ArithmeticError):
    """A non-finite value reached a point where finiteness is required."""


class GenerationError(ValueError):
    """A synthetic scene specification cannot be rendered."""
