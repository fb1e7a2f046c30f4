"""Semantic exceptions shared across the package."""


class CCGlassoError(Exception):
    """Base class for all package errors."""


class DataFormatError(CCGlassoError, ValueError):
    """Input files or arrays violate the dataset contract."""


class FullyCensoredColumnError(DataFormatError):
    """A response column has no observed entries, so its marginal law is unidentifiable."""


class DegenerateRegionError(CCGlassoError, ValueError):
    """A truncation region carries too little probability mass to work with."""


class ConvergenceError(CCGlassoError, RuntimeError):
    """An iterative routine exceeded its iteration cap where a result is required."""


class NotPositiveDefiniteError(CCGlassoError, ValueError):
    """A matrix that must be (numerically) positive definite is not."""
