"""Exception hierarchy for the toolkit.

Every module raises subclasses of VprError so callers can catch one base
class at the CLI boundary and map it to a nonzero exit status.
"""


class VprError(Exception):
    """Base class for all toolkit errors."""


class ManifestMissing(VprError):
    """A required pose manifest file does not exist."""


class InconsistentManifest(VprError):
    """Pose manifest and image files disagree (orphan id on either side)."""


class DecodeError(VprError):
    """An image file could not be decoded."""


class InvalidSpec(VprError):
    """A synthetic-world spec violates its invariants."""


class InvalidFraction(VprError):
    """Validation split fraction outside [0, 1]."""


class ShapeError(VprError):
    """Dimension mismatch between arrays or model layers."""


class FormatError(VprError):
    """A binary file does not start with the expected magic bytes."""


class TruncatedError(VprError):
    """A binary file ends before the declared payload is complete."""


class EmptyReferences(VprError):
    """A map build was attempted with no reference images."""


class KTooLarge(VprError):
    """Requested more neighbors than the map contains."""


class MissingGroundTruth(VprError):
    """A retrieval result refers to a query with no ground-truth entry."""


class DegenerateSpectrum(VprError):
    """Fewer than two non-degenerate principal directions."""


class NothingToSample(VprError):
    """Augmentation spec enables no operation kinds."""


class InvalidMultiplicity(VprError):
    """Finetune query multiplicity must be at least 1."""


class NumericalDivergence(VprError):
    """Training produced a non-finite loss value."""
