"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: bad inputs exit with 2, numerical
failures with 3, and contract violations (a solver breaking one of its own
guarantees, e.g. an objective increase) with 4.
"""

from __future__ import annotations


class Cos2aError(Exception):
    """Base class for all toolkit errors."""


class InputError(Cos2aError, ValueError):
    """Invalid user input: bad arguments, malformed files, shape mismatches."""


class FormatError(InputError):
    """A file does not conform to one of the documented on-disk formats."""


class NumericalError(Cos2aError):
    """A computation produced non-finite values or a degenerate operator."""


class ContractViolation(Cos2aError):
    """An internal solver guarantee was broken; indicates a bug, not bad input."""
