import numpy as np
import pandas as pd
import pytest

from costate.config import EncoderConfig
from costate.model import (
    ModelParams, ReferenceSet, binarize, collaborative_infer, confusion_counts, encode, infer_cohort,
    infer_from_similarity, infer_single, write_predictions,
)
from costate.model.encoder import EmbeddingSequence
from costate.utils.exceptions import DataError

from .conftest import make_record


@pytest.fixture
def params():
    return ModelParams.initialize(3, EncoderConfig(hidden_size=5, latent_size=4), seed=9)


def test_plugging_targets_recovers_labels():
    rng = np.random.Generator(np.random.PCG64(0))
    for _ in range(100):
        y_true = rng.choice([-1, 1], size=rng.integers(1, 30))
        y_r = rng.choice([-1, 1], size=rng.integers(1, 30))
        np.testing.assert_array_equal(infer_from_similarity(np.outer(y_true, y_r), y_r), y_true)


def test_zero_similarity_gives_zero_scores():
    np.testing.assert_array_equal(infer_from_similarity(np.zeros((4, 3)), np.array([1, -1, 1])), np.zeros(4))


def test_least_squares_matches_row_oracle():
    rng = np.random.Generator(np.random.PCG64(1))
    S, y_r = rng.uniform(-1, 1, size=(6, 9)), rng.choice([-1, 1], size=9)
    expected = [sum(S[u, v] * y_r[v] for v in range(9)) / sum(y_r[v] ** 2 for v in range(9)) for u in range(6)]
    np.testing.assert_allclose(infer_from_similarity(S, y_r), expected, atol=1e-12)


def test_empty_reference_labels_rejected():
    with pytest.raises(DataError):
        infer_from_similarity(np.zeros((2, 0)), np.array([]))


def test_single_reference_equals_infer_single(params):
    ref, test = make_record("R", 12, seed=1, ih_every=3), make_record("T", 9, seed=2)
    expected = infer_single(encode(test.X, params).Z, encode(ref.X, params).Z, ref.y)
    np.testing.assert_allclose(collaborative_infer(ReferenceSet([ref]), test.X, params), expected, atol=1e-12)


def test_duplicate_reference_matches_single(params):
    ref, test = make_record("R", 12, seed=1, ih_every=3), make_record("T", 9, seed=2)
    twin = make_record("R2", 12, seed=1, ih_every=3)
    single = collaborative_infer(ReferenceSet([ref]), test.X, params)
    doubled = collaborative_infer(ReferenceSet([ref, twin]), test.X, params)
    np.testing.assert_allclose(doubled, single, atol=1e-12)


def test_three_references_average(params):
    refs = [make_record(f"R{k}", 10 + k, seed=k, ih_every=2 + k) for k in range(3)]
    test = make_record("T", 7, seed=11)
    Z_t = encode(test.X, params).Z
    terms = [infer_single(Z_t, encode(r.X, params).Z, r.y) for r in refs]
    np.testing.assert_allclose(collaborative_infer(ReferenceSet(refs), test.X, params), sum(terms) / 3.0, atol=1e-12)


def test_empty_reference_set_rejected(params):
    with pytest.raises(DataError, match="参考集合为空"):
        collaborative_infer(ReferenceSet(), np.ones((3, 3)), params)


def test_cohort_inference_matches_per_patient(params):
    refs = ReferenceSet([make_record(f"R{k}", 10, seed=k, ih_every=3) for k in range(2)])
    tests = [make_record("T0", 8, seed=20), make_record("T1", 5, seed=21)]
    scores = infer_cohort(refs, tests, params)
    for record in tests:
        np.testing.assert_allclose(scores[record.patient_id], collaborative_infer(refs, record.X, params), atol=1e-12)


def test_binarize_is_strict():
    np.testing.assert_array_equal(binarize(np.array([0.2, -0.3])), [1, -1])
    np.testing.assert_array_equal(binarize(np.array([0.5, 0.5]), threshold=0.5), [-1, -1])


def test_confusion_counts():
    counts = confusion_counts(np.array([0.4, -0.1, 0.2, -0.9]), np.array([1, 1, -1, -1]))
    assert counts == {"tp": 1, "fp": 1, "tn": 1, "fn": 1}
    with pytest.raises(DataError):
        confusion_counts(np.zeros(2), np.ones(3))


def test_reference_set_bookkeeping(params):
    refs = ReferenceSet([make_record("A", 10, ih_every=5), make_record("B", 6, ih_every=3)])
    stats = refs.get_stats()
    assert stats["total_references"] == 2
    assert stats["total_samples"] == 16
    assert stats["ih_fraction"] == pytest.approx(8 / 16)

    assert refs.limit(1).ids == ["A"]
    assert refs.limit(None) is refs
    with pytest.raises(DataError, match="尚未编码"):
        refs.pairs()
    refs.ensure_embeddings(params)
    assert [record.patient_id for record, _ in refs.pairs()] == ["A", "B"]

    refs.unregister("A")
    assert refs.ids == ["B"]


def test_reference_embedding_length_checked():
    refs = ReferenceSet()
    with pytest.raises(DataError, match="嵌入行数"):
        refs.register(make_record("A", 5), EmbeddingSequence(np.zeros((4, 2)), "A"))


def test_predictions_file(tmp_path):
    records = [make_record("A", 3, ih_every=1), make_record("B", 2, ih_every=1)]
    scores = {"A": np.array([0.1, -0.2, 0.3]), "B": np.array([0.0, 0.5])}
    path = write_predictions(tmp_path / "out" / "predictions.csv", records, scores)
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["patient_id", "t", "score", "label_true"]
    assert frame["patient_id"].tolist() == ["A", "A", "A", "B", "B"]
    assert frame["t"].tolist() == [0, 1, 2, 0, 1]
    assert frame["label_true"].tolist() == [-1, 1, -1, -1, 1]
