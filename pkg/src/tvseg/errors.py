class NumericalError(RuntimeError):
    """Raised when a computation produces or receives non-finite values."""
