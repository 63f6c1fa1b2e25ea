"""Exception types raised by the scan pipeline."""


class DriftscanError(ValueError):
    """Base class for all driftscan errors."""


class DegenerateMarginError(DriftscanError):
    """A contingency-table margin is zero, the statistic is undefined."""

    def __init__(self, message="table has a zero margin", replicate=None):
        if replicate is not None:
            message = f"{message} (replicate {replicate})"
        super().__init__(message)
        self.replicate = replicate


class ZeroDenominatorError(DriftscanError):
    """The weighted variance sum in an adapted statistic is zero."""


class ScenarioMismatchError(DriftscanError):
    """Observed counts do not match the declared sampling scenario."""


class NotPolymorphicError(DriftscanError):
    """Fewer than two alleles with positive total count at a locus."""


class DegenerateMomentsError(DriftscanError):
    """Sample moments are incompatible with a beta distribution."""


class InsufficientTailError(DriftscanError):
    """Too few null p-values below the threshold to fit a tail model."""


class SyncParseError(DriftscanError):
    """Malformed line in a sync-format file."""

    def __init__(self, line_number, reason):
        super().__init__(f"line {line_number}: {reason}")
        self.line_number = line_number
        self.reason = reason
