"""Exception types shared across the package."""


class ConstraintViolation(ValueError):
    """Inputs fall outside the model assumptions (dimension ratios, spikes, ...)."""


class DomainError(ValueError):
    """A function was evaluated outside the region where it is defined."""


class DegenerateInputError(ValueError):
    """A data matrix is numerically rank deficient."""


class PoleError(ValueError):
    """The spectral parameter collides with an eigenvalue of the null matrix."""

    def __init__(self, message: str, nearest: float | None = None):
        super().__init__(message)
        self.nearest = nearest
