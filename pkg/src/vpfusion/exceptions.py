"""Exception hierarchy.

Every error carries a short ``category`` string; the CLI prints it as the
machine-parsable prefix of its one-line error report.
"""


class VPFError(Exception):
    category = "error"


class MalformedInputError(VPFError, ValueError):
    category = "malformed-input"


class NotFoundError(VPFError, LookupError):
    category = "not-found"


class ShapeError(VPFError, ValueError):
    category = "shape"


class DegenerateProjectionError(VPFError, ValueError):
    """Point lies on (or numerically at) the camera plane."""

    category = "degenerate-projection"


class DegenerateRoiError(VPFError, ValueError):
    category = "degenerate-roi"


class OutOfBoundsError(VPFError, ValueError):
    category = "out-of-bounds"


class NumericError(VPFError, ArithmeticError):
    category = "numeric"


class InvalidBoxError(VPFError, ValueError):
    category = "invalid-box"


class UndefinedAPError(VPFError, ValueError):
    category = "undefined-ap"


class IncompleteTableError(VPFError, ValueError):
    category = "incomplete-table"


class ConfigError(VPFError, ValueError):
    category = "usage"
