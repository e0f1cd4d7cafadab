"""Exception types raised across robust_sco.

All of them derive from ValueError so existing ``except ValueError`` blocks
keep catching bad inputs.
"""


class InvalidArgumentError(ValueError):
    """An argument violates an operation's precondition."""


class UnsupportedFamilyError(InvalidArgumentError):
    """The function family has no closed form for the requested quantity."""


class BreakdownError(InvalidArgumentError):
    """The contamination level reaches the estimator's breakdown constant."""
