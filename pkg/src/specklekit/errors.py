"""Exception types shared across the toolkit."""


class SpeckleKitError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(SpeckleKitError, ValueError):
    """Invalid argument or configuration value (CLI exit code 2)."""


class GridFormatError(SpeckleKitError):
    """Malformed grid file (CLI exit code 3)."""


class GridMagicError(GridFormatError):
    """Magic string missing or names an unsupported format version."""


class GridHeaderError(GridFormatError):
    """Header fields missing, out of order, or unparseable."""


class GridPayloadError(GridFormatError):
    """Payload length does not match the header."""

    def __init__(self, expected_bytes: int, actual_bytes: int, offset: int):
        self.expected_bytes = expected_bytes
        self.actual_bytes = actual_bytes
        self.offset = offset
        super().__init__(
            f"payload length mismatch at byte offset {offset}: "
            f"expected {expected_bytes} bytes, got {actual_bytes}"
        )


class VerificationError(SpeckleKitError):
    """A self-check on generated data failed (CLI exit code 4)."""
