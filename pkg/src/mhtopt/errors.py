"""Semantic exception hierarchy shared by all modules."""


class MhtOptError(Exception):
    """Base error for this package."""


class InputError(MhtOptError, ValueError):
    """Inputs violate a contract (domain, shape, missing configuration)."""


class InfeasibleError(MhtOptError):
    """A requested construction has no solution in the feasible range."""


class ClosedFormUnavailableError(MhtOptError):
    """No exact expression exists for this rule/covariance pairing.

    Callers can retry with a Monte Carlo configuration.
    """


class DegenerateRuleWarning(UserWarning):
    """Emitted when a constructor returns an always-reject (or never-reject) rule."""
