"""Exception hierarchy.

Every error carries an ``exit_code`` so the command-line front end can map
failures onto its stable taxonomy (1 domain/validation, 2 config, 3 numerical).
"""


class PVIError(Exception):
    exit_code = 3


class DomainError(PVIError, ValueError):
    """A point lies outside the effective domain of a convex function or of D-bar."""

    exit_code = 1


class ConvergenceError(PVIError, ArithmeticError):
    """An iterative fallback exceeded its iteration cap."""


class GeometryError(PVIError):
    """Projection onto the boundary failed (step too large for the domain's reach)."""


class RegressionError(PVIError):
    """Normal equations singular even after the regularized fallback."""


class ImplicitSolveError(PVIError):
    """No sign change found in the safeguard bracket of an implicit scalar solve."""


class StabilityError(PVIError, ValueError):
    """A time-stepping parameter is outside its stability range."""


class ShapeError(PVIError, ValueError):
    """Two grids or trajectories cannot be compared."""


class ConfigError(PVIError, ValueError):
    exit_code = 2


class ParseError(ConfigError):
    """Syntax error in a coefficient expression.

    Attributes
    ----------
    offset : int
        Byte offset of the offending token in the source text.
    expected : frozenset of str
        Token kinds the parser would have accepted at ``offset``.
    """

    def __init__(self, message, offset, expected=()):
        self.offset = offset
        self.expected = frozenset(expected)
        detail = f"{message} at byte {offset}"
        if self.expected:
            detail += f" (expected one of: {', '.join(sorted(self.expected))})"
        super().__init__(detail)


class EvalError(PVIError, ArithmeticError):
    """An expression produced NaN or an infinity."""

    exit_code = 1
