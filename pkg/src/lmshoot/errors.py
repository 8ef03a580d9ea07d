"""Exception types raised across the package."""


class LandmarkFormatError(ValueError):
    """A landmark file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}: "
        super().__init__(where + message)


class ShapeMismatchError(ValueError):
    """Paired arrays do not have matching (N, d)."""


class DivergenceError(FloatingPointError):
    """Integration produced a non-finite state."""

    def __init__(self, message, step=None, index=None):
        self.step = step
        self.index = index
        super().__init__(message)


class MemoryBudgetError(MemoryError):
    """The precompute backend would need more memory than it is allowed."""

    def __init__(self, required, available):
        self.required = int(required)
        self.available = int(available)
        super().__init__(
            f"precompute backend needs {self.required} bytes "
            f"({self.required / 2**30:.2f} GiB) but the budget is {self.available} bytes "
            f"({self.available / 2**30:.2f} GiB)"
        )


class NonDescentError(ValueError):
    """Line search was given a direction along which the objective does not decrease."""
