"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Invalid argument values or malformed inputs."""


class DimensionError(ValidationError):
    """Array shapes that cannot be combined (e.g. kernel larger than image)."""


class NonFiniteLossError(RuntimeError):
    """Raised when an entire outer step produced non-finite losses.

    Carries the partial trace collected so far in ``trace``.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
