"""Transformer model: linear-attention oracles, causality, loss, schedule,
training behavior, and checkpointing."""

import numpy as np
import pytest

from emomusic.autodiff import Tensor
from emomusic.model import (
    ModelConfig,
    ShapeMismatch,
    _linear_attention,
    _linear_attention_scan,
    _softmax_attention,
    forward,
    forward_batch,
    init_state,
    next_token_loss,
)
from emomusic.tokens import BOS, EOS, PAD, VOCAB_SIZE
from emomusic.training import (
    Adam,
    NonFiniteLoss,
    TrainConfig,
    load_checkpoint,
    lr_schedule,
    save_checkpoint,
    train,
)


def reference_linear_attention(q, k, v):
    """Independent double-loop oracle for the causal linear-attention formula."""
    def phi(x):
        return np.where(x > 0, x + 1.0, np.exp(x))

    b, h, t, d = q.shape
    out = np.zeros_like(v)
    for bi in range(b):
        for hi in range(h):
            for i in range(t):
                num = np.zeros(v.shape[-1])
                den = 0.0
                for j in range(i + 1):
                    weight = phi(q[bi, hi, i]) @ phi(k[bi, hi, j])
                    num += weight * v[bi, hi, j]
                    den += weight
                out[bi, hi, i] = num / den
    return out


class TestLinearAttention:
    def test_hand_computed_three_token_trace(self):
        # phi(1)=2, phi(0)=1; prefix sums worked out by hand
        q = np.array([[[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]]])
        v = np.array([[[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]]])
        out = _linear_attention(Tensor(q), Tensor(q.copy()), Tensor(v)).data
        expected = np.array([[1.0, 2.0],
                             [19.0 / 9.0, 28.0 / 9.0],
                             [3.2, 4.2]])
        assert out[0, 0] == pytest.approx(expected, abs=1e-12)

    def test_matches_brute_force_reference(self):
        rng = np.random.default_rng(41)
        q = rng.normal(size=(2, 3, 7, 4))
        k = rng.normal(size=(2, 3, 7, 4))
        v = rng.normal(size=(2, 3, 7, 4))
        out = _linear_attention(Tensor(q), Tensor(k), Tensor(v)).data
        assert out == pytest.approx(reference_linear_attention(q, k, v), abs=1e-10)

    def test_chunked_equals_scan_across_lengths(self):
        rng = np.random.default_rng(44)
        for t in (1, 5, 32, 33, 80):
            q = rng.normal(size=(2, 2, t, 4))
            k = rng.normal(size=(2, 2, t, 4))
            v = rng.normal(size=(2, 2, t, 4))
            chunked = _linear_attention(Tensor(q), Tensor(k), Tensor(v)).data
            scan = _linear_attention_scan(Tensor(q), Tensor(k), Tensor(v)).data
            assert chunked == pytest.approx(scan, abs=1e-9)

    def test_chunked_gradients_finite_and_match_scan(self):
        rng = np.random.default_rng(45)
        q = rng.normal(size=(1, 1, 40, 3))
        k = rng.normal(size=(1, 1, 40, 3))
        v = rng.normal(size=(1, 1, 40, 3))
        grads = []
        for attend in (_linear_attention, _linear_attention_scan):
            tq, tk, tv = (Tensor(x, requires_grad=True) for x in (q, k, v))
            (attend(tq, tk, tv) ** 2.0).sum().backward()
            grads.append((tq.grad, tk.grad, tv.grad))
            assert all(np.isfinite(g).all() for g in grads[-1])
        for a, b in zip(*grads):
            assert a == pytest.approx(b, abs=1e-9)

    def test_length_one_equals_softmax_attention(self):
        rng = np.random.default_rng(42)
        q = rng.normal(size=(1, 2, 1, 4))
        k = rng.normal(size=(1, 2, 1, 4))
        v = rng.normal(size=(1, 2, 1, 4))
        lin = _linear_attention(Tensor(q), Tensor(k), Tensor(v)).data
        soft = _softmax_attention(Tensor(q), Tensor(k), Tensor(v)).data
        assert lin == pytest.approx(soft, abs=1e-12)
        assert lin == pytest.approx(v, abs=1e-12)  # single key gets weight 1


def tiny_config(**overrides):
    base = dict(n_layers=2, n_heads=1, d_model=16, d_ffn=32, max_len=8,
                dropout=0.0, attr_dim=4)
    base.update(overrides)
    return ModelConfig(**base)


class TestForward:
    def test_output_shape(self):
        state = init_state(tiny_config(), seed=1)
        logits = forward(state, [BOS, 5, 6, EOS], np.array([1, 0, 1, 0]))
        assert logits.shape == (4, VOCAB_SIZE)

    def test_causality_bitwise(self):
        state = init_state(tiny_config(), seed=2)
        bits = np.array([1, 0, 0, 1])
        a = forward(state, [BOS, 10, 20, 30, 40], bits)
        b = forward(state, [BOS, 10, 20, 99, 77], bits)
        assert (a[:2] == b[:2]).all()
        assert not (a[3:] == b[3:]).all()

    def test_conditioning_liveness(self):
        state = init_state(tiny_config(), seed=3)
        a = forward(state, [BOS, 10], np.array([0, 0, 0, 0]))
        b = forward(state, [BOS, 10], np.array([1, 1, 0, 0]))
        assert np.abs(a[0] - b[0]).max() > 0

    def test_too_long_sequence_rejected(self):
        state = init_state(tiny_config(), seed=4)
        with pytest.raises(ShapeMismatch):
            forward(state, [BOS] * 9, np.zeros(4))

    def test_wrong_bits_length_rejected(self):
        state = init_state(tiny_config(), seed=5)
        with pytest.raises(ShapeMismatch):
            forward(state, [BOS, 1], np.zeros(7))

    def test_softmax_and_linear_agree_on_length_one_model(self):
        linear_state = init_state(tiny_config(), seed=6)
        softmax_state = init_state(tiny_config(attention="softmax"), seed=6)
        bits = np.array([1, 0, 1, 0])
        a = forward(linear_state, [BOS], bits)
        b = forward(softmax_state, [BOS], bits)
        assert a == pytest.approx(b, abs=1e-12)


class TestLoss:
    def test_uniform_logits_give_log_vocab(self):
        logits = Tensor(np.zeros((1, 3, VOCAB_SIZE)))
        loss, count = next_token_loss(logits, np.array([[BOS, 5, 6]]))
        assert count == 2
        assert float(loss.data) == pytest.approx(np.log(244), abs=1e-12)

    def test_confident_correct_logits_drive_loss_to_zero(self):
        ids = np.array([[BOS, 7, 9]])
        logits_data = np.zeros((1, 3, VOCAB_SIZE))
        logits_data[0, 0, 7] = 50.0
        logits_data[0, 1, 9] = 50.0
        loss, _ = next_token_loss(Tensor(logits_data), ids)
        assert float(loss.data) < 1e-12

    def test_all_pad_continuation_counts_zero(self):
        ids = np.array([[BOS, PAD, PAD]])
        loss, count = next_token_loss(Tensor(np.zeros((1, 3, VOCAB_SIZE))), ids)
        assert count == 0
        assert float(loss.data) == 0.0


class TestSchedule:
    def test_peak_at_warmup(self):
        cfg = TrainConfig(base_lr=1e-4, warmup_steps=16000)
        assert lr_schedule(16000, cfg) == pytest.approx(1e-4, abs=0)

    def test_linear_warmup_point(self):
        cfg = TrainConfig(base_lr=1e-4, warmup_steps=16000)
        assert lr_schedule(4000, cfg) == pytest.approx(2.5e-5, abs=0)

    def test_inverse_sqrt_decay_point(self):
        cfg = TrainConfig(base_lr=1e-4, warmup_steps=16000)
        assert lr_schedule(64000, cfg) == pytest.approx(5e-5, abs=0)


def two_sequence_dataset():
    seq_a = [BOS, 30, 40, 50, 60, EOS]
    seq_b = [BOS, 130, 140, 150, 160, EOS]
    return [(seq_a, np.array([1, 0, 0, 1])), (seq_b, np.array([0, 1, 1, 0]))]


class TestTraining:
    def test_zero_lr_leaves_parameters_unchanged(self):
        state = init_state(tiny_config(), seed=7)
        before = {k: p.data.copy() for k, p in state.params.items()}
        train(state, two_sequence_dataset(),
              TrainConfig(batch_size=2, base_lr=0.0, warmup_steps=5, max_steps=20))
        for name, p in state.params.items():
            assert (p.data == before[name]).all()

    def test_same_seed_identical_loss_log(self):
        cfg = TrainConfig(batch_size=2, base_lr=1e-3, warmup_steps=10,
                          max_steps=30, seed=9)
        _, log_a = train(init_state(tiny_config(dropout=0.1), seed=8),
                         two_sequence_dataset(), cfg)
        _, log_b = train(init_state(tiny_config(dropout=0.1), seed=8),
                         two_sequence_dataset(), cfg)
        assert log_a == log_b

    def test_loss_decreases_when_overfitting(self):
        state = init_state(tiny_config(d_model=32, d_ffn=64), seed=10)
        cfg = TrainConfig(batch_size=2, base_lr=3e-3, warmup_steps=20,
                          max_steps=150, seed=11)
        _, log = train(state, two_sequence_dataset(), cfg)
        assert log[-1][2] < 0.25 < log[0][2]

    def test_non_finite_loss_aborts(self):
        state = init_state(tiny_config(), seed=12)
        state.params["tok_emb"].data[:] = np.inf
        with pytest.raises(NonFiniteLoss):
            train(state, two_sequence_dataset(),
                  TrainConfig(batch_size=2, base_lr=1e-3, warmup_steps=5, max_steps=5))


class TestGradientCheck:
    def test_every_parameter_group_matches_finite_differences(self):
        state = init_state(tiny_config(), seed=13)
        ids = np.array([[BOS, 9, 55, 200, 7, 120, 33, EOS]])
        bits = np.array([[1.0, 0.0, 1.0, 1.0]])

        def loss_value() -> float:
            loss, _ = next_token_loss(forward_batch(state, ids, bits), ids)
            return float(loss.data)

        for p in state.params.values():
            p.grad = None
        loss, _ = next_token_loss(forward_batch(state, ids, bits), ids)
        loss.backward()

        rng = np.random.default_rng(14)
        h = 1e-5
        for name, p in state.params.items():
            flat = p.data.reshape(-1)
            grad = p.grad.reshape(-1)
            picks = rng.choice(flat.size, size=min(4, flat.size), replace=False)
            for i in picks:
                old = flat[i]
                flat[i] = old + h
                up = loss_value()
                flat[i] = old - h
                down = loss_value()
                flat[i] = old
                numeric = (up - down) / (2 * h)
                denom = max(abs(numeric), abs(grad[i]), 1e-8)
                assert abs(numeric - grad[i]) / denom < 1e-3, name


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        state = init_state(tiny_config(), seed=15)
        medians = np.array([0.5, 1.5, 2.5, 3.5])
        save_checkpoint(tmp_path / "ckpt.npz", state, step=42,
                        catalog_version="v1", indices=[1, 2, 3, 4], medians=medians)
        loaded, manifest = load_checkpoint(tmp_path / "ckpt.npz")
        assert manifest["step"] == 42
        assert manifest["catalog_version"] == "v1"
        assert manifest["indices"] == [1, 2, 3, 4]
        assert manifest["medians"] == medians.tolist()
        for name, p in state.params.items():
            assert (loaded.params[name].data == p.data).all()
        ids = [BOS, 4, 5]
        bits = np.array([1, 0, 1, 0])
        assert forward(loaded, ids, bits) == pytest.approx(forward(state, ids, bits))


class TestAdam:
    def test_single_step_matches_hand_formula(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        p.grad = np.array([0.5])
        opt = Adam(beta1=0.9, beta2=0.98, eps=1e-9)
        opt.step({"p": p}, lr=0.1)
        # first step: m_hat = g, v_hat = g^2 -> update = lr * g / (|g| + eps)
        assert p.data[0] == pytest.approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-9))
