"""Batch diversity diagnostics on gradient embeddings.

A selected batch G (rows = embeddings) is summarized by the log determinant
of its Gram matrix G G^T and by the mean embedding norm. A batch with
near-duplicate rows has a singular Gram matrix; that state is reported as
-inf rather than raising, so per-round logs can record collapsed batches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BatchDiagnostics:
    batch_size: int
    log_gram_det: float
    mean_norm: float


def _embedding_matrix(embeddings):
    arr = np.asarray(embeddings, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError(f"expected a nonempty (B, dim) embedding matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("embedding matrix contains non-finite entries")
    return arr


def log_gram_det(embeddings):
    """log det(G G^T) of a (B, dim) batch, -inf when the Gram matrix is singular.

    The determinant goes through a Cholesky factorization with no jitter; a
    non-positive pivot means the factorization fails and the determinant is
    treated as zero.
    """
    G = _embedding_matrix(embeddings)
    gram = G @ G.T
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        return float("-inf")
    return float(2.0 * np.sum(np.log(np.diag(chol))))


def mean_embedding_norm(embeddings):
    """Mean Euclidean row norm of a (B, dim) batch."""
    G = _embedding_matrix(embeddings)
    return float(np.linalg.norm(G, axis=1).mean())


def compute_batch_diagnostics(embeddings):
    G = _embedding_matrix(embeddings)
    return BatchDiagnostics(
        batch_size=G.shape[0],
        log_gram_det=log_gram_det(G),
        mean_norm=mean_embedding_norm(G),
    )
