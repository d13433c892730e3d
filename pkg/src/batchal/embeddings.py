"""Hallucinated-gradient embeddings for pool examples.

For a softmax classifier whose last layer sees features z, the gradient of
the cross-entropy loss at a hallucinated label yhat = argmax_i p_i, taken
with respect to the last-layer weights, decomposes into one block per class:

    block_i = (p_i - 1[yhat == i]) * z

The squared norm of that vector is (sum_i p_i^2 + 1 - 2 p_y) * ||z||^2 for
label y, which is minimized over y exactly at the most likely class. These
embeddings are what the batch selectors below consume: their norms encode
predictive uncertainty and their directions encode where the model would
move, so diverse high-norm batches are informative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Probability vectors are accepted when they sum to one within this slack.
PROB_SUM_TOL = 1e-6


def _as_float_vector(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_probs(probs):
    """Validate one probability vector and return it as float64."""
    p = _as_float_vector(probs, "probs")
    if np.any(p < 0.0):
        raise ValueError("probs contains negative entries")
    s = float(p.sum())
    if abs(s - 1.0) > PROB_SUM_TOL:
        raise ValueError(f"probs sums to {s!r}, expected 1 within {PROB_SUM_TOL}")
    return p


def check_probs_matrix(probs):
    """Validate an (n, K) matrix of probability rows and return it as float64."""
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"probs matrix must be nonempty 2-d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("probs matrix contains non-finite entries")
    if np.any(arr < 0.0):
        raise ValueError("probs matrix contains negative entries")
    sums = arr.sum(axis=1)
    bad = np.nonzero(np.abs(sums - 1.0) > PROB_SUM_TOL)[0]
    if bad.size:
        raise ValueError(f"probs row {int(bad[0])} sums to {sums[bad[0]]!r}, expected 1")
    return arr


@dataclass(frozen=True)
class PredictionRecord:
    """Model outputs for one pool example: softmax probs and last-layer features."""

    example_id: int
    probs: np.ndarray
    features: np.ndarray

    def validate(self):
        check_probs(self.probs)
        _as_float_vector(self.features, "features")
        return self


@dataclass(frozen=True)
class GradientEmbedding:
    """Flat gradient embedding with K contiguous blocks of length d each."""

    vector: np.ndarray
    num_classes: int
    feature_dim: int
    norm_sq: float

    def block(self, i):
        if not 0 <= i < self.num_classes:
            raise IndexError(f"block index {i} out of range for {self.num_classes} classes")
        return self.vector[i * self.feature_dim : (i + 1) * self.feature_dim]


def hypothetical_label(probs):
    """Most likely class under probs; ties break toward the lowest index."""
    p = check_probs(probs)
    return int(np.argmax(p))


def hypothetical_labels(probs_matrix):
    """Row-wise hypothetical labels for an (n, K) matrix of probability rows."""
    arr = check_probs_matrix(probs_matrix)
    return np.argmax(arr, axis=1)


def gradient_embedding(record, num_classes=None, feature_dim=None):
    """Embed one prediction record as its hallucinated-label loss gradient.

    The optional num_classes / feature_dim arguments assert the expected
    dimensions; a mismatch against the record is an error.
    """
    p = check_probs(record.probs)
    z = _as_float_vector(record.features, "features")
    if num_classes is not None and num_classes != p.size:
        raise ValueError(f"record has {p.size} classes, expected {num_classes}")
    if feature_dim is not None and feature_dim != z.size:
        raise ValueError(f"record has feature dim {z.size}, expected {feature_dim}")
    coeffs = p.copy()
    coeffs[int(np.argmax(p))] -= 1.0
    vec = np.outer(coeffs, z).ravel()
    return GradientEmbedding(
        vector=vec,
        num_classes=p.size,
        feature_dim=z.size,
        norm_sq=float(vec @ vec),
    )


def pool_gradient_embeddings(probs_matrix, features_matrix):
    """Stack gradient embeddings for a whole candidate pool.

    Returns an (n, K*d) float64 array whose rows are bit-equal to the
    per-record gradient_embedding vectors on the same inputs: every entry is
    the single product (p_i - 1[yhat == i]) * z_j either way.
    """
    P = check_probs_matrix(probs_matrix)
    Z = np.asarray(features_matrix, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] != P.shape[0]:
        raise ValueError(f"features matrix shape {Z.shape} does not match probs shape {P.shape}")
    if not np.all(np.isfinite(Z)):
        raise ValueError("features matrix contains non-finite entries")
    n = P.shape[0]
    coeffs = P.copy()
    coeffs[np.arange(n), np.argmax(P, axis=1)] -= 1.0
    return np.einsum("ni,nj->nij", coeffs, Z).reshape(n, P.shape[1] * Z.shape[1])


def grad_norm_sq_for_label(probs, label, feature_norm_sq):
    """Closed-form squared norm of the label-y loss gradient.

    Equals (sum_i p_i^2 + 1 - 2 p_y) * ||z||^2, so it never requires forming
    the embedding itself.
    """
    p = check_probs(probs)
    if not 0 <= label < p.size:
        raise ValueError(f"label {label} out of range for {p.size} classes")
    if feature_norm_sq < 0:
        raise ValueError("feature_norm_sq must be nonnegative")
    return float((p @ p + 1.0 - 2.0 * p[label]) * feature_norm_sq)
