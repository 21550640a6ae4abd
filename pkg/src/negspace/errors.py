"""Exception hierarchy shared across the package."""


class NegspaceError(Exception):
    """Base class for all domain errors raised by this package."""


# --- geometry ---

class NearZeroVector(NegspaceError):
    """Vector norm is too small to normalize."""


class DimensionMismatch(NegspaceError):
    """Operands have incompatible dimensions."""


class ThresholdOutOfRange(NegspaceError):
    """Cosine threshold outside its admissible range."""


class ConceptsIndistinguishable(NegspaceError):
    """Affirmative and negated embeddings are (nearly) identical."""


class ConceptsAntipodal(NegspaceError):
    """Affirmative and negated embeddings are (nearly) antipodal."""


# --- store ---

class IoFailure(NegspaceError):
    """Underlying I/O operation failed."""


class BadMagic(NegspaceError):
    """Vector file does not start with the expected magic bytes."""


class VersionUnsupported(NegspaceError):
    """Vector file version is not supported."""


class LengthMismatch(NegspaceError):
    """Vector file payload length disagrees with its header."""


class ManifestMismatch(NegspaceError):
    """Manifest contents disagree with the vector file or are invalid."""


class ZeroNormRow(NegspaceError):
    """A stored vector row has (near-)zero norm."""


class UnknownId(NegspaceError, KeyError):
    """Requested item id is not present in the store."""


# --- decomposition ---

class EmptyCaption(NegspaceError):
    """Caption is empty after trimming."""


class EndpointUnreachable(NegspaceError):
    """Remote decomposer endpoint could not be reached."""


class MalformedReply(NegspaceError):
    """Remote decomposer reply violates the JSON contract."""


class CacheCorrupt(NegspaceError):
    """Decomposition cache file is not valid JSON (recovered as empty)."""


# --- evaluation / analysis ---

class UnknownCaption(NegspaceError, KeyError):
    """Caption has no embedding in the text store."""


class UnknownLabel(NegspaceError, KeyError):
    """Requested label is absent from the store or anchor set."""


class UnlabeledItem(NegspaceError):
    """Ranked item carries no label."""
