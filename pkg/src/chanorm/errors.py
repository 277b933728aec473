"""Exception and warning types shared across the package."""


class ChanormError(Exception):
    """Base class for all errors raised by this package."""


class UnsupportedFormatError(ChanormError):
    """Audio file is not a mono 16-bit PCM RIFF/WAVE file."""


class SignalTooShortError(ChanormError):
    """Signal shorter than one analysis frame."""


class ConfigError(ChanormError):
    """Invalid framing configuration, or input inconsistent with it."""


class InvalidSmoothingError(ChanormError):
    """Smoothing coefficient outside (0, 1]."""


class InvalidParameterError(ChanormError):
    """Normalizer parameter violates its documented range."""


class ShapeMismatchError(ChanormError):
    """Array arguments have inconsistent shapes."""


class EmptyInputError(ChanormError):
    """Operation requires at least one frame / sample."""


class SchemaMismatchError(ChanormError):
    """Parameter or feature file is missing required keys or has a wrong version."""


class ParseError(ChanormError):
    """Parameter or feature file could not be parsed."""


class DegenerateRangeWarning(UserWarning):
    """Image rendering hit a constant-valued feature matrix."""
