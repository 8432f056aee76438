"""Exception hierarchy shared by every DIDA component."""


class DidaError(Exception):
    """Base class for all errors raised by the DIDA pipeline."""


class ConfigError(DidaError, ValueError):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


class DataError(DidaError):
    """A dataset cannot be used for the requested operation."""


class ResourceError(DidaError):
    """A lexicon, embedding or dictionary file is missing or malformed."""


class NumericalError(DidaError, ArithmeticError):
    """Non-finite values appeared in inputs, logits, losses or gradients."""


class TranslationError(DidaError):
    """A single translator call failed; callers may retry."""


class TranslationFailed(TranslationError):
    """All retries of a back-translation were exhausted."""


class CheckpointError(DidaError):
    """A checkpoint has the wrong format version or configuration hash."""
