"""Exception taxonomy shared by all cfdet modules."""


class CfdetError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(CfdetError):
    """An argument violates a documented precondition."""


class BoundaryError(CfdetError):
    """A point lies on or outside the Poincare ball boundary."""


class SingularityError(CfdetError):
    """A denominator degenerated below the safe threshold."""


class FormatError(CfdetError):
    """An on-disk artifact does not match its binary/JSON schema.

    ``offset`` carries the byte offset of the first violation when known.
    """

    def __init__(self, message, offset=None):
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")
        self.offset = offset


class VersionMismatchError(FormatError):
    """A file declares a format version this build does not support."""


class DataValidationError(CfdetError):
    """Data fails a content check (non-finite entries, bad shapes)."""


class ConfigError(CfdetError):
    """A configuration value or key is unknown or inconsistent."""


class CheckpointError(CfdetError):
    """A checkpoint is incomplete, tampered, or incompatible."""


class DivergenceError(CfdetError):
    """Training produced a non-finite loss."""
