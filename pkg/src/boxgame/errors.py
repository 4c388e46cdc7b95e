"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, data errors
exit 2, solver failures exit 3.
"""


class BoxGameError(Exception):
    """Base class for all package errors."""


class UsageError(BoxGameError):
    """Bad command line or config input."""


class DataError(BoxGameError):
    """Malformed or inconsistent data files / inputs."""


class SolverError(BoxGameError):
    """Linear program or equilibrium computation failed."""
