"""Exception types shared across the package."""


class NumericError(Exception):
    """A non-finite value was produced where finite math is required."""
