"""Exception hierarchy shared across the package.

Three families matter to callers: shape/graph misuse (ShapeError),
bad data or files (DataError and subclasses), and numerical blow-ups
(NumericError). The CLI maps them to exit codes 1/2/3 respectively.
"""


class ShapeError(ValueError):
    """Inconsistent tensor shapes or a non-scalar differentiation target."""


class DataError(Exception):
    """Invalid input data: dimensions, speakers, files, corpora."""


class DimMismatchError(DataError):
    """Feature dimensionality of two objects disagrees."""


class UnknownSpeakerError(DataError):
    """Speaker id outside the embedding table."""


class FormatError(DataError):
    """A binary or text artifact does not follow its file format."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class BadVersionError(FormatError):
    """File carries an unsupported format version."""


class TruncatedFileError(FormatError):
    """File ended before the declared payload was read."""


class ConfigError(DataError):
    """Malformed or inconsistent configuration text."""


class NumericError(Exception):
    """Non-finite values encountered where finite ones are required."""
