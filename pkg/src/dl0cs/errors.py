class InvalidParameterError(ValueError):
    """Raised when an argument violates an operation's precondition."""
