"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when inputs violate a documented precondition."""


class UnsupportedBoundaryError(ValidationError):
    """Raised when a named lattice is requested with open boundaries."""


class BudgetExceededError(RuntimeError):
    """Raised when a computation would exceed its cost or size budget.

    The budget is always checked before any large allocation happens, so
    this error is cheap and leaves no partial state behind.
    """
