"""Exception types shared across the toolkit.

Everything derives from MiEmbedError so callers can catch toolkit failures
in one clause; the concrete classes also inherit the matching builtin
(ValueError / RuntimeError) to stay friendly to generic handling.
"""


class MiEmbedError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatchError(MiEmbedError, ValueError):
    """Input shape is inconsistent with the model or dataset it is fed to."""


class InsufficientSamplesError(MiEmbedError, ValueError):
    """A user or cluster has fewer samples than the operation requires."""


class SizingError(MiEmbedError, ValueError):
    """A split or pool cannot be built at the requested sizes."""


class CsvFormatError(MiEmbedError, ValueError):
    """A CSV file does not match the documented schema."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class CheckpointError(MiEmbedError, ValueError):
    """A checkpoint document is missing fields or has an unknown version."""


class CacheMismatchError(MiEmbedError, ValueError):
    """A backward pass was given activations from a different forward pass."""


class DegenerateBatchError(MiEmbedError, ValueError):
    """A triplet batch cannot supply both positives and negatives."""


class DegenerateDataError(MiEmbedError, ValueError):
    """Training data is unusable (single label, zero variance, empty)."""


class DegenerateSimilarityError(MiEmbedError, ValueError):
    """Cosine similarity is undefined because an embedding has zero norm."""


class TrainingDivergedError(MiEmbedError, RuntimeError):
    """Loss or gradients became non-finite during training."""

    def __init__(self, message, epoch=None, shadow_index=None):
        parts = []
        if shadow_index is not None:
            parts.append(f"shadow {shadow_index}")
        if epoch is not None:
            parts.append(f"epoch {epoch}")
        if parts:
            message = f"{message} ({', '.join(parts)})"
        super().__init__(message)
        self.epoch = epoch
        self.shadow_index = shadow_index
