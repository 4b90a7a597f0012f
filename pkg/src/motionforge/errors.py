"""Shared exception types."""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class ContractError(ValueError):
    """A documented precondition was violated."""


class NumericError(ArithmeticError):
    """Non-finite values encountered during a numeric procedure."""


class SpecValidationError(ValueError):
    """A serialized spec/manifest violates its schema.

    ``path`` points at the offending field, e.g. ``objects[1].points``.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
