"""Error types raised by the store, the indexes and the bench tooling."""


class SiriError(Exception):
    """Base class for every error raised by this package."""


class UsageError(SiriError, ValueError):
    """A caller broke an operation's contract (bad argument, bad batch, bad mix of roots)."""


class CorruptionError(SiriError):
    """A node is missing from the store or cannot be decoded."""


class SnapshotError(CorruptionError):
    """A store snapshot or root catalog on disk is malformed."""


class AbsentKeyError(SiriError, KeyError):
    """The requested key is not present under the given root."""

    def __str__(self) -> str:
        # KeyError quotes its argument; keep the plain message.
        return str(self.args[0]) if self.args else "key not found"
