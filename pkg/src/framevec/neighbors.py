"""Cosine nearest-neighbor queries over one mode's vectors."""

from __future__ import annotations

import numpy as np

from .corpus import Vocabulary


def knn(
    vocab: Vocabulary,
    matrix: np.ndarray,
    query: str,
    k: int = 10,
) -> list[tuple[str, float]]:
    """Top-k words by cosine similarity to ``query``'s vector.

    The query itself and zero-norm vectors are excluded; ties are broken
    lexicographically.  Raises KeyError naming the word if it is not in the
    vocabulary.
    """
    if query not in vocab:
        raise KeyError(f"word {query!r} is not in the vocabulary")
    if k < 1:
        raise ValueError("k must be >= 1")
    if k >= len(vocab):
        raise ValueError(f"k={k} must be smaller than the vocabulary ({len(vocab)})")
    matrix = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    qi = vocab.id(query)
    if norms[qi] == 0.0:
        raise ValueError(f"query {query!r} has a zero vector")
    sims = matrix @ matrix[qi]
    scored = []
    for i in range(matrix.shape[0]):
        if i == qi or norms[i] == 0.0:
            continue
        scored.append((vocab.lookup(i), float(sims[i] / (norms[i] * norms[qi]))))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:k]
