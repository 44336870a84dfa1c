"""Exception hierarchy shared across the toolkit."""


class DocforgeError(Exception):
    """Base class for all toolkit errors."""


# --- annotation parsing ---

class MalformedAnnotation(DocforgeError):
    """Annotation file is syntactically invalid or has wrong field types."""


class OutOfBoundsBox(DocforgeError):
    """A word box extends outside the document image."""


class MissingImageRef(DocforgeError):
    """Annotation does not reference a resolvable document image."""


# --- region / raster operations ---

class OutOfBoundsRegion(DocforgeError):
    """A region does not fit inside the image it is applied to."""


class DimensionMismatch(DocforgeError):
    """Two rasters or a patch/region pair disagree in size."""


class DegenerateHistogram(DocforgeError):
    """Binarization input has a single gray level; no threshold exists."""


class UnknownFont(DocforgeError):
    """Font name is not in the bundled font set."""


class EmptyText(DocforgeError):
    """Text to render is empty."""


class FullyMaskedImage(DocforgeError):
    """Inpainting hole leaves no boundary pixels to diffuse from."""


# --- target / donor selection ---

class NoMatchingTarget(DocforgeError):
    """No word box or margin satisfies the target policy."""


class NoBlankRegion(DocforgeError):
    """No blank area large enough for the requested edit."""


class NoDonorWord(DocforgeError):
    """No word box qualifies as a copy-move donor for the target."""


class DegenerateSample(DocforgeError):
    """Edit produced no visible change (or an invalid mask); sample rejected."""


# --- dataset building ---

class EmptyCorpus(DocforgeError):
    """Dataset build requested on an empty corpus."""


class OutputUnwritable(DocforgeError):
    """Output directory cannot be created or written."""


class QuotaUnreachable(DocforgeError):
    """Requested per-case counts cannot be met after exhausting retries."""


class EmptySelectionError(DocforgeError):
    """Subset filter predicate matched no manifest entries."""


class ManifestError(DocforgeError):
    """Manifest file is malformed or internally inconsistent."""


class VerificationError(DocforgeError):
    """A stored dataset sample violates a dataset invariant."""


# --- evaluation ---

class MissingPrediction(DocforgeError):
    """No prediction mask found for a test entry."""


# --- generator bridge ---

class BridgeError(DocforgeError):
    """Base class for external-generator protocol errors."""


class GeneratorTimeout(BridgeError):
    """External generator did not finish within the allowed time."""


class ProcessFailure(BridgeError):
    """External generator exited with a nonzero status."""


class ProtocolViolation(BridgeError):
    """External generator response violates the request/response protocol."""


class OutsideMaskModified(BridgeError):
    """External generator changed pixels outside the requested mask."""
