"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: file/parse problems exit
with 1, validation problems with 2, and numeric/no-valid-data problems
with 3.
"""


class FileFormatError(Exception):
    """A file exists but cannot be parsed (bad magic, truncated payload, ...)."""


class ConfigurationError(ValueError):
    """Inconsistent or out-of-range parameters (sizes, ranges, toggles)."""


class DepthRangeError(ValueError):
    """A world point at or behind the camera plane (z <= 0) cannot project."""


class DisparityRangeError(ValueError):
    """Zero or negative disparity: the point lies at or beyond infinity."""


class RectificationError(ValueError):
    """Left/right rows of a pixel pair disagree beyond the rectification tolerance."""


class InsufficientPointsError(ValueError):
    """Fewer branch outline points than the localisation algorithm needs."""


class NoValidDepthError(RuntimeError):
    """Every candidate sample landed on an invalid disparity pixel."""


class MetricUndefinedError(RuntimeError):
    """A metric has no mutually valid data to evaluate on."""
