import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from costate.autodiff import Tape, Tensor, backward
from costate.model import cosine_similarity_matrix, gram_pair_loss, gram_summary, pair_loss, target_matrix
from costate.utils.exceptions import DataError, DimensionError


def test_self_similarity_and_orthogonality():
    np.testing.assert_allclose(cosine_similarity_matrix(np.array([[1.0, 0.0]]), np.array([[1.0, 0.0]])).data, [[1.0]])
    S = cosine_similarity_matrix(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])).data
    assert S[0, 0] == 0.0


def test_cosine_matches_loop_oracle():
    rng = np.random.Generator(np.random.PCG64(12))
    A, B = rng.normal(size=(6, 4)), rng.normal(size=(5, 4))
    expected = np.array([
        [sum(a * b for a, b in zip(u, v)) / (np.sqrt(sum(a * a for a in u)) * np.sqrt(sum(b * b for b in v))) for v in B]
        for u in A
    ])
    np.testing.assert_allclose(cosine_similarity_matrix(A, B).data, expected, atol=1e-12)


def test_zero_embedding_row_gives_zero_similarity():
    S = cosine_similarity_matrix(np.array([[0.0, 0.0], [1.0, 1.0]]), np.array([[2.0, 0.0]])).data
    assert S[0, 0] == 0.0
    assert S[1, 0] == pytest.approx(1.0 / np.sqrt(2.0))


def test_cosine_rejects_mismatched_latent_size():
    with pytest.raises(DimensionError, match="cosine_similarity_matrix"):
        cosine_similarity_matrix(np.ones((3, 2)), np.ones((3, 4)))


def test_target_matrix_examples():
    np.testing.assert_array_equal(target_matrix(np.array([1, -1, -1]), np.array([1, 1])), [[1, 1], [-1, -1], [-1, -1]])
    np.testing.assert_array_equal(target_matrix(np.ones(3, dtype=int), np.ones(2, dtype=int)), np.ones((3, 2)))


def test_target_matrix_matches_double_loop():
    rng = np.random.Generator(np.random.PCG64(3))
    y_i, y_j = rng.choice([-1, 1], size=7), rng.choice([-1, 1], size=5)
    expected = [[y_i[u] * y_j[v] for v in range(5)] for u in range(7)]
    np.testing.assert_array_equal(target_matrix(y_i, y_j), expected)


@pytest.mark.parametrize("bad", [np.array([1, 0, -1]), np.array([2, 1]), np.array([], dtype=int)])
def test_target_matrix_rejects_invalid_labels(bad):
    with pytest.raises(DataError):
        target_matrix(bad, np.array([1, -1]))


def test_pair_loss_examples():
    T = np.ones((2, 2))
    assert pair_loss(T, T).item() == 0.0
    assert pair_loss(T, np.eye(2), normalize=False).item() == pytest.approx(2.0)
    assert pair_loss(T, np.eye(2)).item() == pytest.approx(0.5)


def test_pair_loss_matches_loop_oracle():
    rng = np.random.Generator(np.random.PCG64(4))
    T, S = rng.choice([-1.0, 1.0], size=(4, 6)), rng.uniform(-1, 1, size=(4, 6))
    raw = sum((T[u, v] - S[u, v]) ** 2 for u in range(4) for v in range(6))
    assert pair_loss(T, S, normalize=False).item() == pytest.approx(raw, abs=1e-12)
    assert pair_loss(T, S).item() == pytest.approx(raw / 24.0, abs=1e-12)


def test_pair_loss_shape_mismatch():
    with pytest.raises(DimensionError, match="pair_loss"):
        pair_loss(np.ones((2, 3)), np.ones((3, 2)))


def embeddings(rows):
    return arrays(np.float64, st.tuples(rows, st.just(3)), elements=st.floats(-50.0, 50.0, allow_nan=False))


def label_vectors(n):
    return arrays(np.int64, n, elements=st.sampled_from([-1, 1]))


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_similarity_and_normalized_loss_stay_bounded(data):
    n_i, n_j = data.draw(st.integers(1, 12)), data.draw(st.integers(1, 12))
    A = data.draw(embeddings(st.just(n_i)))
    B = data.draw(embeddings(st.just(n_j)))
    y_i, y_j = data.draw(label_vectors(n_i)), data.draw(label_vectors(n_j))
    S = cosine_similarity_matrix(A, B)
    assert np.all(np.abs(S.data) <= 1.0 + 1e-12)
    loss = pair_loss(target_matrix(y_i, y_j), S).item()
    assert -1e-12 <= loss <= 4.0 + 1e-12


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_gram_form_equals_elementwise_loss(data):
    n_i, n_j = data.draw(st.integers(1, 12)), data.draw(st.integers(1, 12))
    A = data.draw(embeddings(st.just(n_i)))
    B = data.draw(embeddings(st.just(n_j)))
    y_i, y_j = data.draw(label_vectors(n_i)), data.draw(label_vectors(n_j))
    T = target_matrix(y_i, y_j)
    for normalize in (True, False):
        expected = pair_loss(T, cosine_similarity_matrix(A, B), normalize=normalize).item()
        fused = gram_pair_loss(gram_summary(A, y_i), gram_summary(B, y_j), normalize=normalize).item()
        assert fused == pytest.approx(expected, rel=1e-9, abs=1e-9)


def test_gram_form_gradient_matches_elementwise_loss():
    rng = np.random.Generator(np.random.PCG64(8))
    A, B = rng.normal(size=(7, 4)), rng.normal(size=(5, 4))
    y_i, y_j = rng.choice([-1, 1], size=7), rng.choice([-1, 1], size=5)

    grads = []
    for fused in (False, True):
        a, b = Tensor(A, requires_grad=True), Tensor(B, requires_grad=True)
        with Tape() as tape:
            if fused:
                loss = gram_pair_loss(gram_summary(a, y_i), gram_summary(b, y_j))
            else:
                loss = pair_loss(target_matrix(y_i, y_j), cosine_similarity_matrix(a, b))
        backward(tape, loss)
        grads.append((a.grad, b.grad))
    for plain, fused in zip(*grads):
        np.testing.assert_allclose(fused, plain, rtol=1e-9, atol=1e-12)


def test_gram_summary_rejects_label_length_mismatch():
    with pytest.raises(DimensionError, match="gram_summary"):
        gram_summary(np.ones((3, 2)), np.array([1, -1]))


def test_gram_form_never_materializes_the_pair_matrix():
    rng = np.random.Generator(np.random.PCG64(9))
    a, b = Tensor(rng.normal(size=(40, 3)), requires_grad=True), Tensor(rng.normal(size=(30, 3)), requires_grad=True)
    with Tape() as tape:
        gram_pair_loss(gram_summary(a, rng.choice([-1, 1], size=40)), gram_summary(b, rng.choice([-1, 1], size=30)))
    sizes = [node.output.data.size for node in tape.nodes]
    assert max(sizes) == 40 * 3
