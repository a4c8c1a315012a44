"""Exception types shared across the package."""


class AngerNetError(Exception):
    """Base class for all package errors."""


class ShapeError(AngerNetError, ValueError):
    """Array dimensions are incompatible with an operation."""


class ConfigError(AngerNetError, ValueError):
    """A configuration value is out of its legal range or inconsistent."""


class NumericError(AngerNetError, ArithmeticError):
    """A computation produced or received non-finite values."""


class AudioFormatError(AngerNetError, ValueError):
    """Malformed, unsupported, or truncated audio input."""


class DataError(AngerNetError, ValueError):
    """A dataset-level problem (unusable entries, single-class labels, ...)."""


class ManifestError(AngerNetError, ValueError):
    """Bad manifest file; carries the offending line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class WeightFormatError(AngerNetError, ValueError):
    """Corrupt or incompatible weight/checkpoint file."""


class InputTooShortError(AngerNetError, ValueError):
    """Network input too short for one output frame; names the collapsing layer."""


class ClipTooShortError(AngerNetError):
    """Rejection signal: an utterance is below the minimum usable duration."""
