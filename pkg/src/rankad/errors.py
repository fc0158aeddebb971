"""Exception hierarchy shared by all rankad modules."""


class RankADError(ValueError):
    """Base class for every error raised by rankad."""


class DataError(RankADError):
    """Malformed or inconsistent input data."""


class ArchiveError(RankADError):
    """A model archive could not be read or failed an integrity check."""


class ArchiveVersionError(ArchiveError):
    """The archive was written by an incompatible format version."""


class DegenerateRankingError(RankADError):
    """The nominal scores carry no ordering to learn from."""
