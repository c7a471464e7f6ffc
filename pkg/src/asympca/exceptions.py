"""Exception types shared across the package."""


class DomainError(ValueError):
    """Raised when an input value lies outside the mathematical domain."""


class DegenerateInputError(ValueError):
    """Raised when an input is structurally valid but numerically degenerate."""


class ContractError(ValueError):
    """Raised on shape or precondition violations."""
