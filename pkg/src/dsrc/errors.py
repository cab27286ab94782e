"""Exception types shared across the codec."""


class DsrcError(Exception):
    """Base class for codec errors."""


class FormatError(DsrcError, ValueError):
    """A binary file or stream does not match its declared layout."""


class ConfigError(DsrcError, ValueError):
    """Configuration values are inconsistent with each other or with a model."""


class PacketError(FormatError):
    """Packet reassembly failed.

    ``missing`` holds the sequence numbers that never arrived, ``duplicates``
    the ones that arrived more than once.
    """

    def __init__(self, message, missing=(), duplicates=()):
        super().__init__(message)
        self.missing = frozenset(missing)
        self.duplicates = frozenset(duplicates)
