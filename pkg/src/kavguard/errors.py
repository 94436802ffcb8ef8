"""Error types shared across the package.

The CLI maps these onto its exit-code contract: usage errors exit 2,
format errors exit 3, and OS-level I/O errors exit 4.
"""


class KavError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(KavError):
    """The caller asked for something the inputs cannot support."""


class FormatError(KavError):
    """A file or stream does not conform to its declared format."""
