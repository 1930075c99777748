"""Exception types shared across the mask-synthesis pipeline."""

from __future__ import annotations


class PoseStarError(Exception):
    """Base class for all library-specific failures."""


class FormatError(PoseStarError):
    """File container is not what it claims to be (magic, version, schema)."""


class CorruptError(PoseStarError):
    """Container metadata and payload disagree (truncation, length mismatch)."""


class IoError(PoseStarError):
    """Underlying read/write failed."""


class ParamError(PoseStarError, ValueError):
    """A parameter is outside its documented range."""


class ShapeError(PoseStarError, ValueError):
    """Array dimensions do not match the operation's contract."""


class DegenerateMapError(PoseStarError):
    """Operation requires a map with nonzero mass."""


class UnknownGarmentError(PoseStarError, ValueError):
    """Instruction contains no recognizable garment keyword."""


class UnknownAnchorError(PoseStarError, ValueError):
    """Instruction names a length anchor that is not in the vocabulary."""


class InvalidRangeError(PoseStarError, ValueError):
    """Coverage anchors are ordered against the head-to-toe body order."""


class EmptyRegionError(PoseStarError):
    """Region support is empty where a nonempty region is required."""


class NoTokensError(PoseStarError):
    """No usable token maps remain after matching and degeneracy checks."""
