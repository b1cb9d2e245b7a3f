"""Exception types shared across the package."""


class GenreProbeError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(GenreProbeError):
    """File structure is not what the decoder expects (bad magic, codec, version)."""


class TruncatedError(GenreProbeError):
    """File ends before the header-declared payload does."""


class IntegrityError(GenreProbeError):
    """Checksum mismatch: the payload bytes are corrupt."""


class CapabilityError(GenreProbeError):
    """A backend cannot satisfy the request (missing outputs, missing runtime)."""


class InputError(GenreProbeError):
    """Caller-supplied data violates a precondition (shape, range, emptiness)."""
