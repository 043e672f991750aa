"""Exception hierarchy shared across the harness."""


class LayieError(Exception):
    """Base class for all harness errors."""


class UsageError(LayieError):
    """Caller violated a documented precondition (bad flag, bad argument)."""


class CorpusError(LayieError):
    """A dataset file could not be read or a record is malformed."""


class SchemaError(LayieError):
    """A schema file is invalid (bad pattern, duplicate or missing keys)."""


class BackendError(LayieError):
    """A completion backend failed in a non-retryable way."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class CacheMissError(BackendError):
    """Replay backend was asked for a digest that is not in the store."""

    def __init__(self, digest):
        super().__init__(f"no cached completion for digest {digest}")
        self.digest = digest
