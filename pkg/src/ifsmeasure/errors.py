"""Exception hierarchy shared by the library and the CLI."""


class IfsError(Exception):
    """Base class for all errors raised by ifsmeasure."""


class DomainError(IfsError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConstructionError(IfsError, ValueError):
    """A distribution or IFSp could not be built from the given parameters."""


class NumericError(IfsError, ArithmeticError):
    """A numerical procedure (bracketing, bisection) failed."""


class IntegrityError(IfsError, RuntimeError):
    """An internal consistency check failed (non-finite state, non-monotone map, unsorted input)."""
