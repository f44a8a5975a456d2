"""Error taxonomy shared by every module and surfaced unchanged through the CLI."""


class MixGenError(Exception):
    """Base class for all errors raised by this package."""


# Configuration errors.

class InvalidLambda(MixGenError):
    """Interpolation coefficient outside [0, 1]."""


class InvalidBetaParams(MixGenError):
    """Beta distribution shape parameters must be strictly positive."""


class InvalidMRatio(MixGenError):
    """Replacement fraction must lie in [0, 0.5] so that 2M <= B."""


# Batch / augmentation errors.

class ShapeMismatch(MixGenError):
    """Operands do not share the same dimensions."""


class SelfMix(MixGenError):
    """Both sources of a generated pair have the same id."""


class MTooLarge(MixGenError):
    """Resolved replacement count M violates 2M <= B."""


class DatasetTooSmall(MixGenError):
    """Dataset has fewer pairs than one full batch and drop_last is set."""


# Data IO errors.

class MalformedLine(MixGenError):
    """A manifest line is not a valid record.

    Attributes:
        line_number: 1-based line number of the offending line.
    """

    def __init__(self, line_number: int, reason: str):
        super().__init__(f"line {line_number}: {reason}")
        self.line_number = line_number
        self.reason = reason


class DuplicateId(MixGenError):
    """Two manifest records share an id."""


class DecodeError(MixGenError):
    """An image file could not be read or decoded."""


class UnsupportedFormat(MixGenError):
    """Image file is neither PNG nor JPEG."""


class DestinationUnwritable(MixGenError):
    """Fetch destination directory cannot be created or written."""


# Tensor file errors.

class BadMagic(MixGenError):
    """Tensor file header is not recognized."""


class UnsupportedDtype(MixGenError):
    """Tensor file declares a dtype this reader does not support."""


class LengthMismatch(MixGenError):
    """Tensor file payload or dims disagree with the declared shape."""


class DimMismatch(MixGenError):
    """Feature matrices disagree on the feature dimension."""


# Metrics errors.

class InconsistentGroundTruth(MixGenError):
    """text_to_image and image_to_texts maps are not mutual inverses."""
