"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    pass


class NumericDomainError(ArithmeticError):
    """A value left the numeric domain an update can handle (NaN, inf, negative loss)."""


class ProtocolViolationError(RuntimeError):
    """The announce-then-reveal query protocol was broken."""


class BudgetExceededError(RuntimeError):
    pass
