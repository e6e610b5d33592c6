"""Embedding quality scoring via the first canonical correlation.

Given row-aligned matrices X (learned vectors) and S (oracle vectors), the
score is the largest canonical correlation between their column spaces:
whiten each side's covariance, take the largest singular value of the
cross-covariance in the whitened bases.  The score is invariant under any
invertible linear re-basis of either side, which is the point: it measures
how much of the oracle structure is linearly recoverable from the
embeddings, not whether individual coordinates line up.
"""

from __future__ import annotations

import numpy as np

# Covariance ridge; desk-scale embedding matrices are often rank-deficient.
RIDGE = 1e-8


def _inverse_sqrt(cov: np.ndarray) -> np.ndarray:
    # cov is symmetric PSD plus a positive ridge, so eigh is safe
    evals, evecs = np.linalg.eigh(cov)
    return evecs @ (evecs / np.sqrt(evals)).T


def qvec_cca(x: np.ndarray, s: np.ndarray, ridge: float = RIDGE) -> float:
    """First canonical correlation between row-aligned x and s, in [0, 1].

    Columns are centered; columns with exactly zero variance are dropped
    before the analysis; the ridge is added to both auto-covariance
    diagonals.  Raises on fewer than 2 rows or if either side loses all its
    columns.
    """
    x = np.asarray(x, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if x.ndim != 2 or s.ndim != 2:
        raise ValueError("inputs must be 2-d matrices")
    if x.shape[0] != s.shape[0]:
        raise ValueError(f"row mismatch: {x.shape[0]} vs {s.shape[0]}")
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least 2 aligned rows")

    xc = x - x.mean(axis=0)
    sc = s - s.mean(axis=0)
    xc = xc[:, (xc != 0.0).any(axis=0)]
    sc = sc[:, (sc != 0.0).any(axis=0)]
    if xc.shape[1] == 0 or sc.shape[1] == 0:
        raise ValueError("all columns are constant on at least one side")

    denom = n - 1
    c_xx = xc.T @ xc / denom
    c_ss = sc.T @ sc / denom
    c_xs = xc.T @ sc / denom
    c_xx[np.diag_indices_from(c_xx)] += ridge
    c_ss[np.diag_indices_from(c_ss)] += ridge

    m = _inverse_sqrt(c_xx) @ c_xs @ _inverse_sqrt(c_ss)
    top = float(np.linalg.svd(m, compute_uv=False)[0])
    return min(max(top, 0.0), 1.0)
