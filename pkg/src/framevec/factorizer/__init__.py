"""Skip-gram factorization of sparse count tensors with negative sampling.

The inner training loop has two interchangeable kernels: a compiled
extension (``_sgd_fast``, built from Cython) and a pure-Python fallback
(``_sgd_numpy``).  ``COMPILED`` says whether the fast kernel imported;
``TrainConfig.backend`` picks one explicitly ("auto" prefers compiled).
"""

from .io import EmbeddingFormatError, load_embeddings, save_embeddings
from .model import (
    EmbeddingSet,
    NoiseSampler,
    TrainConfig,
    context_scores,
    exact_loglik,
    ns_loss_and_grads,
    sample_negatives,
    score,
    softmax_prob,
)
from .train import COMPILED, TrainDivergedError, resolve_backend, sgd_train

__all__ = [
    "COMPILED",
    "EmbeddingFormatError",
    "EmbeddingSet",
    "NoiseSampler",
    "TrainConfig",
    "TrainDivergedError",
    "context_scores",
    "exact_loglik",
    "load_embeddings",
    "ns_loss_and_grads",
    "resolve_backend",
    "sample_negatives",
    "save_embeddings",
    "score",
    "softmax_prob",
    "sgd_train",
]
