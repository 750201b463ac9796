"""Error taxonomy shared across the package.

ValidationError maps to CLI exit code 1, InfeasibleError (and its
UnsupportedChannelError subclass) to exit code 2.
"""


class ZeroRateError(Exception):
    """Base class for all package errors."""


class ValidationError(ZeroRateError, ValueError):
    """Malformed input: bad tables, inconsistent shapes, broken invariants."""


class InfeasibleError(ZeroRateError):
    """A well-formed problem with an empty feasible set (e.g. cost budget
    below the cheapest stationary distribution)."""


class UnsupportedChannelError(InfeasibleError):
    """Channel outside the theory's scope, e.g. infinite Bhattacharyya
    distances (disjoint output supports) on every feasibility component."""
