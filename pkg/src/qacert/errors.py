"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: input errors exit 2, precondition
failures exit 3, precision exhaustion exits 4.
"""


class QacertError(Exception):
    """Base class for library errors."""


class InputError(QacertError, ValueError):
    """Malformed or out-of-range input (descriptor, parameter, grid)."""


class PreconditionError(QacertError, ValueError):
    """A mathematical precondition of an operation does not hold."""


class TruncationError(PreconditionError):
    """A truncated supremum or search was attained at its boundary."""


class PrecisionError(QacertError, ArithmeticError):
    """Working precision was insufficient even after escalation."""


class DomainError(QacertError, ValueError):
    """Argument outside the mathematical domain of a function."""
