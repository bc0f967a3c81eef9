import json

import numpy as np
import pytest

from costate.autodiff import Tape, backward
from costate.config import EncoderConfig, TrainConfig
from costate.model import (
    CollaborativeTrainer, ModelParams, accumulate_anchor_gradients, checkpoint, cosine_similarity_matrix,
    encode, encode_tensor, pair_loss, restore, target_matrix, train,
)
from costate.utils.exceptions import DataError

from .conftest import make_record, separable_record


def test_one_optimizer_step_per_anchor(small_cohort, tiny_encoder_cfg):
    params, trace = train(small_cohort, TrainConfig(n_epochs=3, lr=0.01), tiny_encoder_cfg)
    assert trace.optimizer_steps == 3 * len(small_cohort)
    assert len(trace.epoch_losses) == 3
    assert all(np.isfinite(trace.epoch_losses))
    assert params.latent_size == 3


def test_training_is_deterministic(small_cohort, tiny_encoder_cfg):
    cfg = TrainConfig(n_epochs=2, lr=0.01, seed=5, shuffle_anchors=True, subsample_pairs=2)
    first, trace_a = train(small_cohort, cfg, tiny_encoder_cfg)
    second, trace_b = train(small_cohort, cfg, tiny_encoder_cfg)
    for name in first.tensors:
        np.testing.assert_array_equal(first.tensors[name].data, second.tensors[name].data)
    assert trace_a.epoch_losses == trace_b.epoch_losses


def test_different_seeds_give_different_parameters(small_cohort, tiny_encoder_cfg):
    a, _ = train(small_cohort, TrainConfig(n_epochs=1, seed=0), tiny_encoder_cfg)
    b, _ = train(small_cohort, TrainConfig(n_epochs=1, seed=1), tiny_encoder_cfg)
    assert not np.array_equal(a.tensors["W_i"].data, b.tensors["W_i"].data)


@pytest.mark.parametrize("average", [True, False])
def test_batched_accumulation_matches_pairwise_reencoding(small_cohort, average):
    cfg = TrainConfig(average_pair_grads=average)
    enc = EncoderConfig(hidden_size=4, latent_size=3, use_self_attention=True, use_cross_attention=True)
    params = ModelParams.initialize(3, enc, seed=2)
    reference = params.copy()
    partners = [1, 2, 3]

    losses = accumulate_anchor_gradients(params, small_cohort, 0, partners, cfg)

    expected_losses = []
    for j in partners:
        a, b = small_cohort[0], small_cohort[j]
        with Tape() as tape:
            S = cosine_similarity_matrix(encode_tensor(a.X, reference), encode_tensor(b.X, reference))
            loss = pair_loss(target_matrix(a.y, b.y), S)
        backward(tape, loss)
        expected_losses.append(loss.item())

    np.testing.assert_allclose(losses, expected_losses, rtol=1e-10)
    scale = 1.0 / len(partners) if average else 1.0
    for name, t in params.tensors.items():
        np.testing.assert_allclose(t.grad, reference.tensors[name].grad * scale, rtol=1e-8, atol=1e-12)


def test_training_log_is_jsonl(tmp_path, small_cohort, tiny_encoder_cfg):
    log_path = tmp_path / "logs" / "train_log.jsonl"
    _, trace = CollaborativeTrainer(TrainConfig(n_epochs=2), tiny_encoder_cfg, log_path=log_path).train(small_cohort)
    rows = [json.loads(line) for line in log_path.read_text(encoding="utf-8").splitlines()]
    assert [row["epoch"] for row in rows] == [1, 2]
    assert [row["mean_loss"] for row in rows] == trace.epoch_losses
    assert trace.to_rows()[0]["epoch"] == 1


def test_needs_two_patients(tiny_encoder_cfg):
    with pytest.raises(DataError, match="至少需要 2"):
        train([make_record("A", 10)], TrainConfig(n_epochs=1), tiny_encoder_cfg)


def test_rejects_mixed_feature_widths(tiny_encoder_cfg):
    cohort = [make_record("A", 10, d=3), make_record("B", 10, d=2)]
    with pytest.raises(DataError, match="特征维度"):
        train(cohort, TrainConfig(n_epochs=1), tiny_encoder_cfg)


def test_single_class_patient_is_allowed(tiny_encoder_cfg):
    quiet = make_record("Q", 8, ih_every=0, seed=1)
    quiet.y[:] = -1
    params, trace = train([quiet, make_record("A", 8, ih_every=2)], TrainConfig(n_epochs=1), tiny_encoder_cfg)
    assert trace.optimizer_steps == 2


def test_pair_subsampling_limits_partners(small_cohort):
    trainer = CollaborativeTrainer(TrainConfig(subsample_pairs=2, seed=3))
    partners = trainer._partners(1, len(small_cohort))
    assert len(partners) == 2
    assert 1 not in partners
    assert partners == sorted(partners)


def test_anchor_shuffle_is_a_permutation():
    trainer = CollaborativeTrainer(TrainConfig(shuffle_anchors=True, seed=4))
    order = trainer._anchor_order(6)
    assert sorted(order.tolist()) == list(range(6))
    assert CollaborativeTrainer(TrainConfig())._anchor_order(4).tolist() == [0, 1, 2, 3]


def test_checkpoint_round_trip(tmp_path, small_cohort, tiny_encoder_cfg):
    params, _ = train(small_cohort, TrainConfig(n_epochs=1), tiny_encoder_cfg)
    digest = checkpoint(params, tmp_path / "checkpoint.json")
    restored = restore(tmp_path / "checkpoint.json")
    assert len(digest) == 64
    assert restored.cfg == params.cfg
    for name in params.tensors:
        np.testing.assert_array_equal(restored.tensors[name].data, params.tensors[name].data)


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(5))
def test_separable_pair_is_learned(seed):
    cohort = [separable_record("A", 40, seed=2 * seed), separable_record("B", 40, seed=2 * seed + 1)]
    params, trace = train(
        cohort,
        TrainConfig(n_epochs=200, lr=0.01, seed=seed),
        EncoderConfig(hidden_size=8, latent_size=8, use_self_attention=False),
    )
    assert trace.epoch_losses[-1] < 0.2
    assert trace.epoch_losses[-1] < trace.epoch_losses[0]

    a, b = (encode(r.X, params).Z for r in cohort)
    S = cosine_similarity_matrix(a, b).data
    T = target_matrix(cohort[0].y, cohort[1].y)
    assert S[T == 1].mean() > 0.5
    assert S[T == -1].mean() < -0.5
