"""Hallucinated-gradient embedding construction and its norm identity."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from batchal.embeddings import (
    GradientEmbedding,
    PredictionRecord,
    gradient_embedding,
    grad_norm_sq_for_label,
    hypothetical_label,
    hypothetical_labels,
    pool_gradient_embeddings,
)


def record(probs, features, example_id=0):
    return PredictionRecord(example_id=example_id, probs=np.asarray(probs, dtype=np.float64),
                            features=np.asarray(features, dtype=np.float64))


# Valid probability vectors of 2..10 classes. Normalizing inside the
# strategy keeps the row sum within float rounding of one.
def prob_vectors(max_classes=10):
    return (
        st.lists(st.floats(0.001, 1.0), min_size=2, max_size=max_classes)
        .map(lambda xs: np.array(xs) / np.sum(xs))
    )


# Entries are either zero or of sane magnitude; products with small
# probabilities must stay clear of the subnormal range where scaling by a
# power of two stops being exact.
feature_vectors = st.lists(
    st.floats(-8.0, 8.0, allow_nan=False).map(lambda v: 0.0 if abs(v) < 1e-6 else v),
    min_size=1,
    max_size=32,
).map(np.array)


class TestHypotheticalLabel:
    def test_unique_maximum(self):
        assert hypothetical_label([0.2, 0.5, 0.3]) == 1

    def test_tie_breaks_to_lowest_index(self):
        assert hypothetical_label([0.5, 0.5]) == 0

    def test_one_hot(self):
        assert hypothetical_label([1.0, 0.0, 0.0]) == 0

    def test_rejects_empty_and_nonfinite(self):
        with pytest.raises(ValueError):
            hypothetical_label([])
        with pytest.raises(ValueError):
            hypothetical_label([0.5, np.nan])

    def test_rejects_negative_and_unnormalized(self):
        with pytest.raises(ValueError):
            hypothetical_label([0.7, -0.2, 0.5])
        with pytest.raises(ValueError):
            hypothetical_label([0.7, 0.7])

    def test_matrix_version_matches_per_row(self):
        rng = np.random.default_rng(7)
        P = rng.dirichlet(np.ones(4), size=50)
        rows = hypothetical_labels(P)
        assert rows.tolist() == [hypothetical_label(p) for p in P]


class TestGradientEmbedding:
    def test_two_class_hand_example(self):
        # p = (0.9, 0.1), z = (1, 2): yhat = 0, so block 0 gets coefficient
        # 0.9 - 1 and block 1 gets 0.1.
        emb = gradient_embedding(record([0.9, 0.1], [1.0, 2.0]))
        np.testing.assert_allclose(emb.block(0), [-0.1, -0.2])
        np.testing.assert_allclose(emb.block(1), [0.1, 0.2])
        assert emb.num_classes == 2 and emb.feature_dim == 2

    def test_one_hot_probs_give_zero_vector(self):
        emb = gradient_embedding(record([0.0, 1.0, 0.0], [3.0, -1.0]))
        assert np.all(emb.vector == 0.0)
        assert emb.norm_sq == 0.0

    def test_zero_features_give_zero_vector(self):
        emb = gradient_embedding(record([0.25, 0.75], [0.0, 0.0, 0.0]))
        assert np.all(emb.vector == 0.0)

    def test_dimension_assertions(self):
        rec = record([0.5, 0.5], [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            gradient_embedding(rec, num_classes=3)
        with pytest.raises(ValueError):
            gradient_embedding(rec, feature_dim=2)

    def test_block_index_out_of_range(self):
        emb = gradient_embedding(record([0.5, 0.5], [1.0]))
        with pytest.raises(IndexError):
            emb.block(2)
        with pytest.raises(IndexError):
            emb.block(-1)

    @given(prob_vectors(), feature_vectors)
    def test_blocks_match_formula_elementwise(self, p, z):
        emb = gradient_embedding(record(p, z))
        yhat = hypothetical_label(p)
        for i in range(p.size):
            expected = (p[i] - (1.0 if i == yhat else 0.0)) * z
            assert np.array_equal(emb.block(i), expected)


class TestNormSqForLabel:
    def test_confident_on_own_label_is_zero(self):
        assert grad_norm_sq_for_label([1.0, 0.0], 0, 1.0) == 0.0

    def test_confident_on_other_label(self):
        assert grad_norm_sq_for_label([1.0, 0.0], 1, 1.0) == pytest.approx(2.0)

    def test_split_probs(self):
        assert grad_norm_sq_for_label([0.5, 0.5], 0, 4.0) == pytest.approx(2.0)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            grad_norm_sq_for_label([0.5, 0.5], 2, 1.0)
        with pytest.raises(ValueError):
            grad_norm_sq_for_label([0.5, 0.5], -1, 1.0)


@given(prob_vectors(), feature_vectors)
@settings(max_examples=200)
def test_norm_identity(p, z):
    """The embedding's squared norm matches the closed form at yhat."""
    emb = gradient_embedding(record(p, z))
    closed = grad_norm_sq_for_label(p, hypothetical_label(p), float(z @ z))
    assert emb.norm_sq == pytest.approx(closed, rel=1e-10, abs=1e-30)


@given(prob_vectors())
def test_closed_form_minimized_at_hypothetical_label(p):
    norms = [grad_norm_sq_for_label(p, y, 1.0) for y in range(p.size)]
    yhat = hypothetical_label(p)
    # Ties allowed: yhat must be one of the minimizers.
    assert norms[yhat] == min(norms)


@given(prob_vectors(), st.integers(0, 9))
def test_hypothetical_label_norm_is_a_lower_bound(p, y):
    y = y % p.size
    yhat = hypothetical_label(p)
    assert grad_norm_sq_for_label(p, yhat, 2.5) <= grad_norm_sq_for_label(p, y, 2.5)


@given(prob_vectors(), feature_vectors, st.integers(-3, 8))
def test_feature_scaling(p, z, exponent):
    """z -> c z scales entries by c and norm_sq by c^2, exactly for powers of two."""
    c = float(2.0 ** exponent)
    base = gradient_embedding(record(p, z))
    scaled = gradient_embedding(record(p, c * z))
    assert np.array_equal(scaled.vector, c * base.vector)
    assert scaled.norm_sq == c * c * base.norm_sq


def test_binary_boundary_sign_equivalence():
    # On the two-class decision boundary p = (0.5, 0.5), the gradient under
    # the hallucinated label is exactly minus the gradient under the other
    # label, so the two have bit-equal absolute values.
    z = np.array([0.3, -1.7, 2.0])
    hallucinated = gradient_embedding(record([0.5, 0.5], z)).vector
    coeffs_true_1 = np.array([0.5, 0.5 - 1.0])
    true_label_grad = np.outer(coeffs_true_1, z).ravel()
    assert np.array_equal(hallucinated, -true_label_grad)
    assert np.array_equal(np.abs(hallucinated), np.abs(true_label_grad))


def test_pool_embeddings_bit_equal_to_per_record():
    rng = np.random.default_rng(3)
    P = rng.dirichlet(np.ones(5), size=40)
    Z = rng.standard_normal((40, 7))
    pool = pool_gradient_embeddings(P, Z)
    assert pool.shape == (40, 35)
    for i in range(40):
        single = gradient_embedding(record(P[i], Z[i], example_id=i))
        assert np.array_equal(pool[i], single.vector)


def test_pool_embeddings_shape_mismatch():
    with pytest.raises(ValueError):
        pool_gradient_embeddings(np.full((3, 2), 0.5), np.zeros((4, 2)))


def test_prediction_record_validate():
    rec = record([0.5, 0.5], [1.0, 2.0])
    assert rec.validate() is rec
    with pytest.raises(ValueError):
        record([0.5, 0.6], [1.0]).validate()
    with pytest.raises(ValueError):
        record([0.5, 0.5], [np.inf]).validate()


def test_embedding_dataclass_is_frozen():
    emb = gradient_embedding(record([0.5, 0.5], [1.0]))
    assert isinstance(emb, GradientEmbedding)
    with pytest.raises(AttributeError):
        emb.norm_sq = 0.0
