"""Error taxonomy for the detector harness.

Operational problems (bad paths, unreadable files) raise OSError from the
underlying call. Everything contract-level derives from DetectorError.
"""

from __future__ import annotations


class DetectorError(Exception):
    """Base class for detector-harness contract violations."""


class ManifestFormatError(DetectorError):
    """Dataset manifest is missing, malformed, or the wrong format/version."""


class InsufficientData(DetectorError):
    """Pre-training corpus is below the minimum usable size."""


class EmptyTrainSplit(DetectorError):
    """Fine-tuning requested on a manifest with no train entries."""


class MissingCheckpoint(DetectorError):
    """A checkpoint path does not exist or does not hold a usable checkpoint."""
