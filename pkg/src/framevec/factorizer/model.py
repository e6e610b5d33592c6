"""Model definition: multilinear scores, softmax likelihood, NS loss.

A cell of an n-mode tensor is scored by the sum over components of the
elementwise product of every participating mode vector: the context vector,
the target vector, and one vector per feature mode.  With no feature modes
this is the plain dot product of skip-gram.  The conditional probability of
a context given the rest of a cell is the softmax of these scores over the
whole context vocabulary; training approximates it with negative sampling.

Everything in this module is straight-line reference code used for testing,
evaluation, and monitoring.  The training kernels live in ``_sgd_numpy`` and
``_sgd_fast``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..rng import TapeRng
from ..tensor import ModeRole, ModeSchema, SparseCountTensor

_BACKENDS = ("auto", "fast", "numpy")


@dataclass
class TrainConfig:
    """Hyperparameters for sgd_train.

    ``min_count`` drops training cells whose target occurs fewer than that
    many times in the tensor (the rows stay in the vocabulary but keep their
    initialization).  ``workers`` > 1 enables lock-free parallel updates on
    the compiled kernel only; results are then no longer bitwise
    reproducible.
    """

    d: int = 100
    negatives: int = 15
    epochs: int = 5
    eta0: float = 0.025
    gamma: float = 0.75
    seed: int = 1
    min_count: int = 100
    backend: str = "auto"
    workers: int = 1

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.eta0 > 0:
            raise ValueError("eta0 must be > 0")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.min_count < 0:
            raise ValueError("min_count must be >= 0")
        if self.backend not in _BACKENDS:
            raise ValueError(f"backend must be one of {_BACKENDS}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "negatives": self.negatives,
            "epochs": self.epochs,
            "eta0": self.eta0,
            "gamma": self.gamma,
            "seed": self.seed,
            "min_count": self.min_count,
            "backend": self.backend,
            "workers": self.workers,
        }


class EmbeddingSet:
    """One (vocab size x d) float64 matrix per mode of a schema."""

    __slots__ = ("schema", "matrices", "d")

    def __init__(self, schema: ModeSchema, matrices: dict[str, np.ndarray]):
        if set(matrices) != set(schema.names):
            raise ValueError(
                f"matrix keys {sorted(matrices)} do not match modes {sorted(schema.names)}"
            )
        dims = set()
        for mode in schema:
            mat = np.asarray(matrices[mode.name], dtype=np.float64)
            if mat.ndim != 2 or mat.shape[0] != len(mode.vocab):
                raise ValueError(
                    f"mode {mode.name!r}: expected shape ({len(mode.vocab)}, d), "
                    f"got {mat.shape}"
                )
            if not np.isfinite(mat).all():
                raise ValueError(f"mode {mode.name!r}: non-finite vectors")
            matrices[mode.name] = mat
            dims.add(mat.shape[1])
        if len(dims) != 1:
            raise ValueError(f"inconsistent dimensions across modes: {sorted(dims)}")
        self.schema = schema
        self.matrices = matrices
        self.d = dims.pop()

    def __getitem__(self, mode_name: str) -> np.ndarray:
        return self.matrices[mode_name]

    @property
    def target_mode(self):
        return self.schema.modes[self.schema.target_index]

    @property
    def context_mode(self):
        return self.schema.modes[self.schema.context_index]

    def target_matrix(self) -> np.ndarray:
        return self.matrices[self.target_mode.name]


def _sigmoid(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _softplus(x: float) -> float:
    # log(1 + e^x) without overflow on either side
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


def score(embeddings: EmbeddingSet, cell: tuple[int, ...]) -> float:
    """Sum of the elementwise product of all mode vectors at ``cell``."""
    schema = embeddings.schema
    if len(cell) != len(schema):
        raise ValueError(f"cell arity {len(cell)} != mode count {len(schema)}")
    prod = np.ones(embeddings.d)
    for mode, v in zip(schema.modes, cell):
        prod = prod * embeddings[mode.name][v]
    return float(prod.sum())


def _held_product(embeddings: EmbeddingSet, cell: tuple[int, ...]) -> np.ndarray:
    """Elementwise product of every non-context vector of ``cell``."""
    schema = embeddings.schema
    prod = np.ones(embeddings.d)
    for pos, (mode, v) in enumerate(zip(schema.modes, cell)):
        if pos == schema.context_index:
            continue
        prod = prod * embeddings[mode.name][v]
    return prod


def context_scores(embeddings: EmbeddingSet, cell: tuple[int, ...]) -> np.ndarray:
    """Scores of every context id against the non-context part of ``cell``."""
    held = _held_product(embeddings, cell)
    return embeddings[embeddings.context_mode.name] @ held


def softmax_prob(embeddings: EmbeddingSet, cell: tuple[int, ...]) -> float:
    """P(cell's context | cell's target and features), softmax over contexts."""
    s = context_scores(embeddings, cell)
    m = float(s.max())
    e = np.exp(s - m)
    return float(e[cell[embeddings.schema.context_index]] / e.sum())


def exact_loglik(tensor: SparseCountTensor, embeddings: EmbeddingSet) -> float:
    """Sum over cells of count * log softmax_prob(cell).

    Full-normalizer evaluation; meant for tests and held-out monitoring at
    small scale, not for training.  Cells are grouped by their non-context
    indices so each softmax normalizer is computed once.
    """
    if tensor.schema != embeddings.schema:
        raise ValueError("tensor schema does not match embeddings schema")
    cpos = tensor.schema.context_index
    groups: dict[tuple[int, ...], list[tuple[int, float]]] = {}
    for idx, count in tensor.cells.items():
        key = idx[:cpos] + idx[cpos + 1 :]
        groups.setdefault(key, []).append((idx[cpos], count))
    ctx_matrix = embeddings[embeddings.context_mode.name]
    total = 0.0
    for key, members in groups.items():
        cell = key[:cpos] + (0,) + key[cpos:]
        held = _held_product(embeddings, cell)
        s = ctx_matrix @ held
        m = float(s.max())
        log_z = m + math.log(float(np.exp(s - m).sum()))
        for ctx_id, count in members:
            total += count * (float(s[ctx_id]) - log_z)
    return total


class NoiseSampler:
    """Draws context ids with probability proportional to count^gamma.

    Ids with zero count have zero probability regardless of gamma.  Sampling
    is inverse-CDF over the tape so both training kernels can reproduce the
    exact same draws.
    """

    __slots__ = ("probs", "cum", "n_positive")

    def __init__(self, counts: np.ndarray, gamma: float):
        counts = np.asarray(counts, dtype=np.float64)
        if counts.ndim != 1 or counts.size == 0:
            raise ValueError("counts must be a nonempty 1-d array")
        if (counts < 0).any():
            raise ValueError("counts must be nonnegative")
        weights = np.zeros_like(counts)
        positive = counts > 0
        weights[positive] = counts[positive] ** gamma
        total = float(weights.sum())
        if not total > 0:
            raise ValueError("no context id has positive count")
        self.probs = weights / total
        self.cum = np.cumsum(self.probs)
        # guard against cumulative rounding: the last bucket must catch u -> 1
        self.cum[-1] = 1.0
        self.n_positive = int((weights > 0).sum())

    def sample(self, rng: TapeRng, k: int) -> np.ndarray:
        u = rng.uniforms(k)
        ids = np.searchsorted(self.cum, u, side="right")
        return np.minimum(ids, len(self.cum) - 1).astype(np.int64)


def sample_negatives(
    tensor: SparseCountTensor, k: int, gamma: float, rng: TapeRng
) -> np.ndarray:
    """Draw ``k`` noise context ids from the tensor's context-mode marginal."""
    cmode = tensor.schema.modes[tensor.schema.context_index]
    counts = np.zeros(len(cmode.vocab))
    for ctx_id, count in tensor.marginal(cmode.name).items():
        counts[ctx_id] = count
    return NoiseSampler(counts, gamma).sample(rng, k)


def ns_loss_and_grads(
    embeddings: EmbeddingSet, cell: tuple[int, ...], negatives
) -> tuple[float, dict[tuple[str, int], np.ndarray]]:
    """Negative-sampling loss and analytic gradients for one cell.

    loss = -log sigmoid(s+) - sum_k log sigmoid(-s-_k) where s+ scores the
    cell and s-_k scores it with the context replaced by negative k.  The
    gradient of the score w.r.t. any one vector is the elementwise product
    of all the others; target and feature vectors accumulate contributions
    from the positive and every negative term.  Returns grads keyed by
    (mode name, row id); repeated negatives accumulate into one entry.

    Unclipped: this is the reference form the training kernels approximate
    (they clamp scores for safety, this function never does).
    """
    schema = embeddings.schema
    if len(cell) != len(schema):
        raise ValueError(f"cell arity {len(cell)} != mode count {len(schema)}")
    cpos = schema.context_index
    tpos = schema.target_index
    true_ctx = cell[cpos]
    negatives = [int(n) for n in negatives]
    if any(n == true_ctx for n in negatives):
        raise ValueError("negatives must not contain the cell's true context")

    d = embeddings.d
    ctx_name = schema.modes[cpos].name
    tgt_name = schema.modes[tpos].name
    ctx_matrix = embeddings[ctx_name]
    w = embeddings[tgt_name][cell[tpos]]
    feat_positions = schema.feature_indices()
    feat_rows = [embeddings[schema.modes[p].name][cell[p]] for p in feat_positions]

    fprod = np.ones(d)
    for row in feat_rows:
        fprod = fprod * row
    hw = w * fprod

    grads: dict[tuple[str, int], np.ndarray] = {}

    def add(key: tuple[str, int], vec: np.ndarray) -> None:
        if key in grads:
            grads[key] = grads[key] + vec
        else:
            grads[key] = vec

    c_pos = ctx_matrix[true_ctx]
    s_pos = float(c_pos @ hw)
    g_pos = _sigmoid(s_pos) - 1.0
    loss = _softplus(-s_pos)
    cacc = g_pos * c_pos
    add((ctx_name, true_ctx), g_pos * hw)

    for nid in negatives:
        c_neg = ctx_matrix[nid]
        s_neg = float(c_neg @ hw)
        g_neg = _sigmoid(s_neg)
        loss += _softplus(s_neg)
        cacc = cacc + g_neg * c_neg
        add((ctx_name, nid), g_neg * hw)

    add((tgt_name, cell[tpos]), cacc * fprod)
    for i, pos in enumerate(feat_positions):
        others = np.ones(d)
        for j, row in enumerate(feat_rows):
            if j != i:
                others = others * row
        add((schema.modes[pos].name, cell[pos]), cacc * w * others)
    return loss, grads
