"""Exception hierarchy shared across the package."""


class DyadExplainError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DyadExplainError):
    """Bad configuration: unknown format tag, missing resource file, invalid value."""


class MalformedFileError(DyadExplainError):
    """An input file does not follow its declared format."""

    def __init__(self, path, row, reason):
        self.path = str(path)
        self.row = row
        self.reason = reason
        where = f"row {row}" if row is not None else "header"
        super().__init__(f"{self.path}: {where}: {reason}")


class NotFoundError(DyadExplainError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "not found"


class EmptyContextError(DyadExplainError):
    """A context or ranking that must be non-empty is empty."""


class NumericFaultError(DyadExplainError, FloatingPointError):
    """A non-finite value appeared inside the network."""

    def __init__(self, layer):
        self.layer = layer
        super().__init__(f"non-finite values produced by layer '{layer}'")


class TrainingDivergedError(DyadExplainError):
    def __init__(self, history, message="training loss became non-finite"):
        self.history = history
        super().__init__(message)


class StageError(DyadExplainError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


class CorruptFileError(DyadExplainError):
    """A binary artifact is truncated or its header is inconsistent."""


class ProviderError(DyadExplainError):
    """An embedding provider failed on a token sequence."""

    def __init__(self, message, tokens=None):
        self.tokens = list(tokens) if tokens is not None else None
        if self.tokens is not None:
            head = " ".join(self.tokens[:8])
            message = f"{message} (tokens[{len(self.tokens)}]: {head!r}{'...' if len(self.tokens) > 8 else ''})"
        super().__init__(message)
