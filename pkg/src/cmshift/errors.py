"""Exception types shared across the pipeline."""


class CmsError(Exception):
    """Base class for all pipeline errors."""


class EmbeddingFormatError(CmsError):
    """EMB1 file has a bad magic, version, or header."""


class EmbeddingCorruptionError(CmsError):
    """EMB1 payload size disagrees with the header."""


class DegenerateInputError(CmsError):
    """An embedding row has zero norm and cannot be normalized."""


class ManifestError(CmsError):
    """Manifest file violates the format or a split invariant."""


class InfeasibleConfigError(CmsError):
    """A configuration cannot be satisfied (e.g. rejection sampling exhausted)."""


class HiddenLabelError(CmsError):
    """Ground-truth label of an unlabeled item was requested through a training view."""


class EmptyBankError(CmsError):
    """Neighbor retrieval against an empty embedding bank."""


class DegenerateAggregateError(CmsError):
    """Kernel-weighted aggregate has (near-)zero norm and cannot be normalized."""


class DegenerateOutputError(CmsError):
    """Projection head produced a (near-)zero pre-normalization output row."""


class InsufficientBatchError(CmsError):
    """Contrastive loss needs at least two items in the batch."""


class NumericError(CmsError):
    """Non-finite value encountered during optimization."""


class CheckpointFormatError(CmsError):
    """CMSH checkpoint file has a bad magic, version, or payload size."""
