"""Exception hierarchy shared across the toolkit.

The CLI maps these onto process exit codes: UsageError -> 1,
DataError -> 2, NumericalError -> 3.
"""


class LrasrError(Exception):
    """Base class for all toolkit errors."""


class UsageError(LrasrError):
    """Bad flags, malformed config, incompatible options."""


class DataError(LrasrError):
    """Input data violates a contract (missing file, bad manifest, ...).

    ``failures`` optionally carries a per-record breakdown.
    """

    def __init__(self, message, failures=None):
        super().__init__(message)
        self.failures = list(failures) if failures else []


class NumericalError(LrasrError):
    """Training diverged or produced non-finite values."""


class InfeasibleTargetError(LrasrError):
    """CTC target longer than the lattice can accommodate."""
