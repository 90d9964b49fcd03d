"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid knob values, dimension mismatches, or inconsistent settings."""


class DataError(ValueError):
    """A dataset or data file failed validation."""


class BadMagicError(DataError):
    """An IDX file starts with an unexpected magic number."""


class TruncatedFileError(DataError):
    """An IDX file ends before the payload promised by its header."""


class CountMismatchError(DataError):
    """Paired IDX image/label files disagree on record count."""


class CsvFormatError(DataError):
    """A CSV dataset has ragged rows or non-numeric cells."""


class ProtocolError(RuntimeError):
    """A federated round saw missing, duplicate, or stale worker reports."""


class InstabilityError(RuntimeError):
    """An iterative routine left its sane region (diverging inner ascent)."""
