"""Exception types shared across the package."""


class BiffError(Exception):
    """Base class for all package errors."""


class ParameterError(BiffError, ValueError):
    """A value violates a configured width, range, or mode constraint."""


class ParamsMismatchError(BiffError):
    """A patch was built with different parameters than the caller supplied."""


class BelowThresholdError(ParameterError):
    """A requested table load sits below the peeling threshold for its k."""


class PatchFormatError(BiffError):
    """Base class for serialized-patch problems."""


class BadMagicError(PatchFormatError):
    """The stream does not start with the patch magic."""


class UnsupportedVersionError(PatchFormatError):
    """The patch format version is not one this build understands."""


class TruncatedPatchError(PatchFormatError):
    """The stream ends before the declared content does."""


class CorruptHeaderError(PatchFormatError):
    """The header fails its integrity check or violates field constraints."""
