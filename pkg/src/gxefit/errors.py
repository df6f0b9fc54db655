"""Exception types shared across the package.

The CLI maps these onto exit codes, so library code should raise the most
specific type that applies rather than bare ValueError/RuntimeError.
"""


class GxefitError(Exception):
    """Base class for every error this package raises on purpose."""


class ParameterError(GxefitError, ValueError):
    """A model parameter is outside its admissible range."""


class SupportError(GxefitError, ValueError):
    """An argument lies outside the support of the relevant distribution."""


class DataError(GxefitError, ValueError):
    """Input data is malformed or unusable (bad CSV, empty stratum, separation)."""


class NumericError(GxefitError, RuntimeError):
    """A numerical procedure failed (no bracket, singular system, divergence)."""
