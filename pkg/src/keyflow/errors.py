"""Exception types shared across the package."""


class KeyflowError(Exception):
    """Base class for all package errors."""


class DegenerateRotation(KeyflowError, ValueError):
    """6D rotation input cannot be orthonormalized (zero or parallel columns)."""


class ParameterOutOfRange(KeyflowError, ValueError):
    """Scalar parameter outside its documented range."""


class BadLength(KeyflowError, ValueError):
    """Vector has the wrong number of entries."""


class ShapeMismatch(KeyflowError, ValueError):
    """Array shapes incompatible with the operation."""


class ConfigInvalid(KeyflowError, ValueError):
    """Generator or model configuration violates its invariants."""


class FormatError(KeyflowError, ValueError):
    """Binary file fails magic/version/length validation."""


class SchemaError(KeyflowError, ValueError):
    """JSON document does not match the documented schema."""


class NotNormalized(KeyflowError, ValueError):
    """Probability rows do not sum to 1."""


class LengthMismatch(KeyflowError, ValueError):
    """Paired sequences have different lengths."""


class InfeasibleTarget(KeyflowError, ValueError):
    """CTC target cannot be emitted in the given number of frames."""


class EmptyCorpus(KeyflowError, ValueError):
    """Training requested on a corpus with no items."""


class EmptyBatch(KeyflowError, ValueError):
    """Training step requested on an empty batch."""


class AnchorMissing(KeyflowError, ValueError):
    """Keyframe mask is true at a frame with no anchor pose."""


class StepsInvalid(KeyflowError, ValueError):
    """Sampler step count below 1."""


class TooShort(KeyflowError, ValueError):
    """Sequence too short for a temporal-difference loss."""


class Empty(KeyflowError, ValueError):
    """Empty sequence where at least one frame is required."""


class DegenerateConfiguration(KeyflowError, ValueError):
    """Point set too degenerate for a similarity fit (fewer than 3 non-collinear points)."""


class NoAnchors(KeyflowError, ValueError):
    """Interpolation baseline called with an all-false keyframe mask."""
