"""Exception types raised by the search engine.

Every error the engine can signal has its own class so callers (and the
CLI exit-code mapping) can distinguish them without parsing messages.
"""


class EngineError(Exception):
    """Base class for all engine errors."""


class GenomeFormatError(EngineError, ValueError):
    """Genome text is malformed, has wrong length, or uses a value outside
    the search-space alphabet.  The message names the offending position."""


class UnsupportedSpaceError(EngineError, ValueError):
    """Operation is only defined for the default search space."""


class SpaceSizeOverflowError(EngineError, OverflowError):
    """Configured space is so large its cardinality exceeds 64-bit range."""


class ResolutionError(EngineError, ValueError):
    """Image resolution is smaller than, or not a multiple of, 2^depth."""


class DocumentError(EngineError, ValueError):
    """Architecture document fails validation or is internally inconsistent."""


class EmptyPopulationError(EngineError, ValueError):
    """Selection over an empty fitness list."""


class NonpositiveFitnessError(EngineError, ValueError):
    """A fitness value is zero, negative, or non-finite.  Names the index."""


class UnevaluatedPopulationError(EngineError, ValueError):
    """Generation step requested before every individual was evaluated."""


class SpaceMismatchError(EngineError, ValueError):
    """Two genomes do not come from the same search space."""


class NonFiniteInputError(EngineError, ValueError):
    """A loss component is NaN or infinite."""


class NonpositiveDenominatorError(EngineError, ValueError):
    """Fitness denominator (loss + gamma * cost) is not positive; the caller
    must fall back to the penalized-fitness policy."""


class ConfigError(EngineError, ValueError):
    """Search configuration violates an invariant."""


class CheckpointError(EngineError, ValueError):
    """Checkpoint document is corrupt (schema or hash mismatch)."""


class CheckpointWriteError(EngineError, OSError):
    """Checkpoint or run artifact could not be written; the previous
    checkpoint on disk is left intact."""
