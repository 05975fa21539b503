"""Exception types raised by the sixdigits pipeline."""


class SixDigitsError(Exception):
    """Base class for all errors raised by this package."""


class NoInkError(SixDigitsError):
    """Digit image contains no usable ink (blank or speck-only)."""


class NoRunsError(SixDigitsError):
    """Ink is present but no background run is bounded by ink on both ends."""


class KindMismatchError(SixDigitsError):
    """Feature PDFs of different kinds or bin counts were combined."""


class DimensionMismatchError(SixDigitsError):
    """Embedding vectors of unequal dimension were combined."""


class ConfigMismatchError(SixDigitsError):
    """Feature sets extracted under different configurations were mixed."""


class DegenerateSampleError(SixDigitsError):
    """All six digit positions of a sample are degenerate (no ink)."""


class AllDegenerateError(SixDigitsError):
    """No digit position survives a template/probe comparison."""


class NoEligibleWritersError(SixDigitsError):
    """No writer in the database has enough samples for the requested split."""


class MissingFeaturesError(SixDigitsError):
    """A split references a sample the feature store cannot provide."""


class InsufficientPoolError(SixDigitsError):
    """The forgery pool lacks a digit label from writers other than the target."""


class EmptyScoresError(SixDigitsError):
    """EER requested on an empty genuine or impostor score list."""


class ParseError(SixDigitsError):
    """A manifest or embedding file could not be parsed."""


class MissingImageError(SixDigitsError):
    """A manifest row points at an image file that does not exist."""


class DimensionError(SixDigitsError):
    """An image or embedding record has the wrong dimensions."""


class DuplicateSampleError(SixDigitsError):
    """A manifest repeats a (writer, sample, digit position) entry."""


class ConfigError(SixDigitsError):
    """A synthesis or run configuration is invalid."""
