"""Frame-structured cooccurrence tensors, skip-gram factorization, and
proto-role evaluation utilities."""

__version__ = "0.1.0"

from .corpus import (
    NO_FRAME,
    NO_ROLE,
    AnnotatedSentence,
    CorpusFormatError,
    FrameAnnotation,
    ReadStats,
    Vocabulary,
    build_vocab,
    head_token,
    iter_tokens,
    iter_trigger_heads,
    read_corpus,
)
from .extract import ExtractStats, extract_frames, extract_windowed
from .tensor import (
    COLLAPSED_MODES,
    FRAME_MODES,
    CollapseStats,
    Mode,
    ModeRole,
    ModeSchema,
    SchemaError,
    SparseCountTensor,
    TensorFormatError,
    collapse_frames,
    load_tensor,
    save_tensor,
)

__all__ = [
    "__version__",
    "NO_FRAME",
    "NO_ROLE",
    "AnnotatedSentence",
    "CorpusFormatError",
    "FrameAnnotation",
    "ReadStats",
    "Vocabulary",
    "build_vocab",
    "head_token",
    "iter_tokens",
    "iter_trigger_heads",
    "read_corpus",
    "ExtractStats",
    "extract_frames",
    "extract_windowed",
    "COLLAPSED_MODES",
    "FRAME_MODES",
    "CollapseStats",
    "Mode",
    "ModeRole",
    "ModeSchema",
    "SchemaError",
    "SparseCountTensor",
    "TensorFormatError",
    "collapse_frames",
    "load_tensor",
    "save_tensor",
]
