"""Exception hierarchy shared by all codec stages."""


class Hdr2lError(Exception):
    """Base class for every error raised by this package."""


class DomainError(Hdr2lError, ValueError):
    """A value lies outside the mathematical domain of an operation."""


class ParameterError(Hdr2lError, ValueError):
    """A caller-supplied parameter violates a documented constraint."""


class ParseError(Hdr2lError, ValueError):
    """Malformed input file or segment.

    Carries the byte offset of the failure when it is known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class IntegrityError(Hdr2lError, ValueError):
    """Two pieces of data that must agree do not (e.g. table/component mismatch)."""


class CorruptStreamError(Hdr2lError, ValueError):
    """A compressed payload cannot be decoded."""


class FormatError(Hdr2lError, ValueError):
    """A container stream fails magic, version, or checksum validation."""


class InternalError(Hdr2lError, RuntimeError):
    """An invariant the codec itself guarantees was violated."""


class BenchError(Hdr2lError, RuntimeError):
    """The benchmark harness cannot produce a valid run."""


class LosslessnessError(BenchError):
    """At least one benchmark cell failed the bit-exact round-trip check."""
