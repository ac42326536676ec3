"""Exception hierarchy shared by all analysis modules."""


class TruncvexError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(TruncvexError, ValueError):
    """Non-finite numbers, malformed grids, bad tolerances."""


class DomainError(TruncvexError, ValueError):
    """A parameter lies outside the open interval an operation is defined on."""


class InconclusiveError(TruncvexError):
    """The window or sample budget is too small to reach a verdict."""


class UndefinedError(TruncvexError):
    """The requested quantity does not exist (e.g. h_max of an empty complement)."""


class BracketError(TruncvexError):
    """A bisection bracket does not straddle the threshold."""


class CurvatureUndefinedError(TruncvexError):
    """Curvature requested at a (near-)critical point."""
