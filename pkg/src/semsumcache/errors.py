"""Exception hierarchy shared across the package."""


class SemsumError(Exception):
    """Base class for all package errors."""


class DimensionError(SemsumError):
    """Vector dimension does not match what the index or cache expects."""


class DegenerateVectorError(SemsumError):
    """A zero (or effectively zero) vector where a direction is required."""


class DuplicateIdError(SemsumError):
    """Entry id already present in the index."""


class UnknownDocumentError(SemsumError):
    """Document id was never registered."""


class StaleVersionError(SemsumError):
    """Operation refers to a document version that has been superseded."""


class VersionOrderError(SemsumError):
    """New document version must be strictly greater than the current one."""


class SnapshotFormatError(SemsumError):
    """Snapshot bytes are corrupt or truncated.

    Carries the byte offset at which decoding failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class EmptyInputError(SemsumError):
    """Non-empty text was required."""


class ProviderUnavailableError(SemsumError):
    """Transport-level provider failure; safe to retry."""


class ProviderProtocolError(SemsumError):
    """Provider returned a malformed response."""


class InsufficientDataError(SemsumError):
    """Not enough data points to compute the requested statistic."""


class IntegrityError(SemsumError):
    """Corpus referential integrity violation (e.g. dangling doc_id)."""


class CorpusSpecError(SemsumError):
    """Invalid synthetic corpus generation parameters."""


class CorpusFormatError(SemsumError):
    """Corpus file failed to parse; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"{message} (line {line})")
        self.line = line
