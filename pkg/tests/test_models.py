"""Tests for the unitary and LSTM sequence models, including BPTT oracles."""

import math

import numpy as np
import pytest

from urnlab.models import (
    START_ID,
    STOP_ID,
    LstmParams,
    UrnParams,
    Vocab,
    _lstm_step_backward,
    backward_batch,
    backward_sequence,
    count_params,
    forward_batch,
    forward_sequence,
    grads_to_vector,
    init_lstm,
    init_urn,
    load_checkpoint,
    lstm_step,
    masked_cross_entropy,
    params_from_vector,
    params_to_vector,
    save_checkpoint,
    sequence_loss,
    sequence_operator,
    urn_step,
)


def rel_err(a, b):
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-300)
    return float(np.abs(a - b).max() / denom)


def random_tokens(rng, vocab_size, length):
    """A well-formed sequence: START, random interior, STOP."""
    body = rng.integers(2, vocab_size, size=length - 2)
    return np.concatenate([[START_ID], body, [STOP_ID]])


def full_loss(model, tokens, rate=0.0, seed=None):
    rng = np.random.default_rng(seed) if seed is not None else None
    logits, _ = forward_sequence(model, tokens, rate=rate, rng=rng,
                                 training=rate > 0.0)
    return sequence_loss(logits, tokens)


def full_grad(model, tokens, rate=0.0, seed=None):
    rng = np.random.default_rng(seed) if seed is not None else None
    logits, trace = forward_sequence(model, tokens, rate=rate, rng=rng,
                                     training=True)
    targets = tokens[1:]
    stop = np.flatnonzero(targets == STOP_ID)[0]
    valid = np.zeros(targets.size)
    valid[:stop + 1] = 1.0
    _, dl = masked_cross_entropy(logits[None, :targets.size],
                                 targets[None, :], valid[None, :])
    dl_full = np.zeros((1, len(tokens), model.vocab_size))
    dl_full[:, :targets.size] = dl
    return grads_to_vector(model, backward_sequence(model, trace, dl_full))


def fd_grad(model, tokens, rate=0.0, seed=None, h=1e-5):
    vec = params_to_vector(model)
    out = np.zeros_like(vec)
    for idx in range(vec.size):
        vp, vm = vec.copy(), vec.copy()
        vp[idx] += h
        vm[idx] -= h
        out[idx] = (full_loss(params_from_vector(model, vp), tokens, rate, seed)
                    - full_loss(params_from_vector(model, vm), tokens, rate, seed)) / (2 * h)
    return out


class TestVocab:
    def test_reserved_ids(self):
        v = Vocab(names=("<s>", "</s>", "a", "b"))
        assert v.start_id != v.stop_id
        assert v.size == 4
        assert v.token_id("a") == 2

    def test_rejects_clashes(self):
        with pytest.raises(ValueError):
            Vocab(names=("x", "x"))
        with pytest.raises(ValueError):
            Vocab(names=("a", "b"), start_id=0, stop_id=0)


class TestParamCounts:
    @pytest.mark.parametrize("units,expected", [(8, 370), (16, 1370), (32, 5290)])
    def test_urn_ten_tokens(self, units, expected):
        model = init_urn(10, units, np.random.default_rng(0))
        assert count_params(model) == expected

    @pytest.mark.parametrize("units,expected", [(8, 444), (16, 1644), (32, 6348)])
    def test_urn_twelve_tokens(self, units, expected):
        model = init_urn(12, units, np.random.default_rng(0))
        assert count_params(model) == expected

    @pytest.mark.parametrize("units,expected", [(8, 1218), (16, 2738), (32, 7314)])
    def test_lstm_ten_tokens(self, units, expected):
        model = init_lstm(10, units, 20, np.random.default_rng(0))
        assert count_params(model) == expected

    @pytest.mark.parametrize("units,expected", [(8, 924), (16, 2204), (32, 6300)])
    def test_lstm_twelve_tokens(self, units, expected):
        model = init_lstm(12, units, 12, np.random.default_rng(0))
        assert count_params(model) == expected

    def test_vector_round_trip(self):
        rng = np.random.default_rng(1)
        for model in (init_urn(6, 5, rng), init_lstm(6, 5, 3, rng)):
            vec = params_to_vector(model)
            assert vec.size == count_params(model)
            clone = params_from_vector(model, vec)
            assert np.array_equal(params_to_vector(clone), vec)


class TestInit:
    def test_urn_start_state_is_unit(self):
        model = init_urn(10, 16, np.random.default_rng(2))
        assert abs(np.linalg.norm(model.h0) - 1.0) < 1e-12

    def test_urn_initial_skew_norm_bounded(self):
        from urnlab.numerics import skew
        model = init_urn(12, 32, np.random.default_rng(3))
        norms = np.abs(skew(model.embedding)).sum(axis=-2).max(axis=-1)
        assert norms.max() <= 1.0 + 1e-12

    def test_same_seed_same_params(self):
        a = init_lstm(10, 8, 20, np.random.default_rng(7))
        b = init_lstm(10, 8, 20, np.random.default_rng(7))
        assert np.array_equal(params_to_vector(a), params_to_vector(b))


class TestUrnStep:
    def test_zero_embedding_is_identity(self):
        model = init_urn(4, 6, np.random.default_rng(4))
        emb = model.embedding.copy()
        emb[2] = 0.0
        model = UrnParams(n=6, embedding=emb, proj_w=model.proj_w,
                          proj_b=model.proj_b, h0=model.h0)
        h = np.random.default_rng(5).standard_normal(6)
        h /= np.linalg.norm(h)
        h2, cache = urn_step(model, h, 2)
        np.testing.assert_array_equal(h2, h)
        np.testing.assert_array_equal(cache["q"], np.eye(6))

    def test_planar_rotation(self):
        theta = 0.3
        model = UrnParams(n=2, embedding=np.array([[theta]]),
                          proj_w=np.zeros((1, 2)), proj_b=np.zeros(1),
                          h0=np.array([1.0, 0.0]))
        h2, _ = urn_step(model, np.array([1.0, 0.0]), 0)
        np.testing.assert_allclose(h2, [math.cos(theta), -math.sin(theta)], atol=1e-14)

    def test_eval_norm_preserved(self):
        rng = np.random.default_rng(6)
        model = init_urn(8, 10, rng)
        h = model.h0
        for tok in rng.integers(0, 8, size=30):
            h, _ = urn_step(model, h, int(tok))
            assert abs(np.linalg.norm(h) - 1.0) < 1e-6

    def test_bad_token(self):
        model = init_urn(4, 4, np.random.default_rng(0))
        with pytest.raises(ValueError):
            urn_step(model, model.h0, 4)


class TestLstmStep:
    def test_zero_weights_zero_state(self):
        zeros = np.zeros
        model = LstmParams(n=3, e=2, embedding=zeros((4, 2)),
                           w_f=zeros((3, 5)), w_i=zeros((3, 5)),
                           w_o=zeros((3, 5)), w_c=zeros((3, 5)),
                           b_f=zeros(3), b_i=zeros(3), b_o=zeros(3), b_c=zeros(3),
                           proj_w=zeros((4, 3)), proj_b=zeros(4))
        h2, c2, _ = lstm_step(model, zeros(3), zeros(3), 1)
        np.testing.assert_array_equal(h2, np.zeros(3))
        np.testing.assert_array_equal(c2, np.zeros(3))

    def test_saturated_forget_gate_keeps_cell(self):
        rng = np.random.default_rng(8)
        model = init_lstm(5, 4, 3, rng)
        model = LstmParams(**{**model.__dict__, "b_f": np.full(4, 50.0)})
        h = rng.standard_normal(4) * 0.1
        c = rng.standard_normal(4)
        h2, c2, cache = lstm_step(model, h, c, 2)
        expected = c + cache["i"] * cache["ct"]
        np.testing.assert_allclose(c2, expected, atol=1e-12)

    def test_step_gradient_vs_finite_difference(self):
        rng = np.random.default_rng(9)
        model = init_lstm(4, 3, 2, rng)
        h = rng.standard_normal(3) * 0.5
        c = rng.standard_normal(3) * 0.5
        r = rng.standard_normal(3)
        token = 2

        def loss_of(vec):
            m = params_from_vector(model, vec)
            h2, _, _ = lstm_step(m, h, c, token)
            return float(r @ h2)

        _, _, cache = lstm_step(model, h, c, token)
        grads, _, _ = _lstm_step_backward(model, cache, r)
        analytic = grads_to_vector(model, grads)
        vec = params_to_vector(model)
        fd = np.zeros_like(vec)
        for idx in range(vec.size):
            vp, vm = vec.copy(), vec.copy()
            vp[idx] += 1e-5
            vm[idx] -= 1e-5
            fd[idx] = (loss_of(vp) - loss_of(vm)) / 2e-5
        assert rel_err(analytic, fd) < 1e-4


class TestForwardSequence:
    def test_uniform_after_zero_projection(self):
        model = init_urn(5, 4, np.random.default_rng(10))
        model = UrnParams(n=4, embedding=model.embedding,
                          proj_w=np.zeros((5, 4)), proj_b=np.zeros(5), h0=model.h0)
        tokens = np.array([START_ID, STOP_ID])
        logits, _ = forward_sequence(model, tokens)
        np.testing.assert_array_equal(logits, np.zeros((2, 5)))
        assert abs(sequence_loss(logits, tokens) - math.log(5)) < 1e-12

    def test_emits_one_row_per_token(self):
        rng = np.random.default_rng(11)
        tokens = random_tokens(rng, 6, 9)
        for model in (init_urn(6, 5, rng), init_lstm(6, 5, 3, rng)):
            logits, trace = forward_sequence(model, tokens)
            assert logits.shape == (9, 6)
            assert len(trace) == 9

    def test_stepwise_matches_step_ops(self):
        rng = np.random.default_rng(12)
        tokens = random_tokens(rng, 6, 7)
        urn = init_urn(6, 5, rng)
        logits, _ = forward_sequence(urn, tokens)
        h = urn.h0
        for t, tok in enumerate(tokens):
            h, _ = urn_step(urn, h, int(tok))
            np.testing.assert_allclose(logits[t], urn.proj_w @ h + urn.proj_b,
                                       atol=1e-12)
        lstm = init_lstm(6, 5, 3, rng)
        logits, _ = forward_sequence(lstm, tokens)
        h, c = np.zeros(5), np.zeros(5)
        for t, tok in enumerate(tokens):
            h, c, _ = lstm_step(lstm, h, c, int(tok))
            np.testing.assert_allclose(logits[t], lstm.proj_w @ h + lstm.proj_b,
                                       atol=1e-12)

    def test_compositionality_stepwise_vs_product(self):
        rng = np.random.default_rng(13)
        model = init_urn(8, 6, rng)
        for _ in range(10):
            tokens = random_tokens(rng, 8, 20)
            _, trace = forward_sequence(model, tokens)
            h_direct = sequence_operator(model, tokens) @ model.h0
            assert np.abs(trace.hs[0, -1] - h_direct).max() < 1e-8

    def test_operator_is_monoid_homomorphism(self):
        rng = np.random.default_rng(14)
        model = init_urn(7, 5, rng)
        u = rng.integers(0, 7, size=4)
        v = rng.integers(0, 7, size=6)
        lhs = sequence_operator(model, np.concatenate([u, v]))
        rhs = sequence_operator(model, v) @ sequence_operator(model, u)
        assert np.abs(lhs - rhs).max() < 1e-8
        np.testing.assert_array_equal(sequence_operator(model, []), np.eye(5))

    def test_transposed_replay_recovers_start(self):
        rng = np.random.default_rng(15)
        model = init_urn(8, 6, rng)
        tokens = random_tokens(rng, 8, 20)
        _, trace = forward_sequence(model, tokens)
        h = trace.hs[0, -1]
        for tok in tokens[::-1]:
            q = sequence_operator(model, [int(tok)])
            h = q.T @ h
        assert np.abs(h - model.h0).max() < 1e-6

    def test_batched_matches_single(self):
        rng = np.random.default_rng(16)
        batch = np.stack([random_tokens(rng, 6, 8) for _ in range(5)])
        for model in (init_urn(6, 5, rng), init_lstm(6, 5, 3, rng)):
            logits_b, _ = forward_batch(model, batch)
            for idx in range(5):
                logits_1, _ = forward_sequence(model, batch[idx])
                np.testing.assert_allclose(logits_b[idx], logits_1, atol=1e-12)

    def test_rejects_bad_input(self):
        model = init_urn(4, 4, np.random.default_rng(0))
        with pytest.raises(ValueError):
            forward_sequence(model, [])
        with pytest.raises(ValueError):
            forward_sequence(model, [2, 3, STOP_ID])


class TestSequenceLoss:
    def test_perfect_prediction(self):
        tokens = np.array([START_ID, 2, 3, STOP_ID])
        logits = np.full((4, 4), -50.0)
        for t, target in enumerate(tokens[1:]):
            logits[t, target] = 50.0
        assert sequence_loss(logits, tokens) < 1e-20

    def test_uniform_prediction(self):
        tokens = np.array([START_ID, 2, 2, 3, STOP_ID])
        logits = np.zeros((5, 6))
        assert abs(sequence_loss(logits, tokens) - 4 * math.log(6)) < 1e-12

    def test_padding_after_stop_excluded(self):
        tokens = np.array([START_ID, 2, STOP_ID, 0, 0])
        rng = np.random.default_rng(17)
        logits = rng.standard_normal((5, 4))
        short = sequence_loss(logits[:3], tokens[:3])
        assert abs(sequence_loss(logits, tokens) - short) < 1e-12

    def test_matches_naive_oracle(self):
        from urnlab.numerics import softmax_cross_entropy
        rng = np.random.default_rng(18)
        tokens = np.array([START_ID, 3, 2, 4, STOP_ID])
        logits = rng.standard_normal((5, 5))
        expected = sum(softmax_cross_entropy(logits[t], int(tokens[t + 1]))[0]
                       for t in range(4))
        assert abs(sequence_loss(logits, tokens) - expected) < 1e-12

    def test_missing_stop(self):
        with pytest.raises(ValueError):
            sequence_loss(np.zeros((3, 4)), np.array([START_ID, 2, 3]))


class TestBackwardSequence:
    def test_zero_dlogits_zero_grads(self):
        rng = np.random.default_rng(19)
        tokens = random_tokens(rng, 5, 6)
        for model in (init_urn(5, 4, rng), init_lstm(5, 4, 3, rng)):
            _, trace = forward_sequence(model, tokens, training=True)
            grads = backward_sequence(model, trace, np.zeros((6, 5)))
            assert np.abs(grads_to_vector(model, grads)).max() == 0.0

    def test_urn_bptt_vs_finite_difference(self):
        rng = np.random.default_rng(20)
        model = init_urn(4, 4, rng)
        tokens = np.array([START_ID, 2, 3, 2, STOP_ID, STOP_ID])[:6]
        assert rel_err(full_grad(model, tokens), fd_grad(model, tokens)) < 1e-4

    def test_lstm_bptt_vs_finite_difference(self):
        rng = np.random.default_rng(21)
        model = init_lstm(4, 4, 3, rng)
        tokens = random_tokens(rng, 4, 7)
        assert rel_err(full_grad(model, tokens), fd_grad(model, tokens)) < 1e-4

    def test_bptt_with_dropout_replayed(self):
        rng = np.random.default_rng(22)
        tokens = random_tokens(rng, 4, 6)
        for model in (init_urn(4, 4, rng), init_lstm(4, 4, 3, rng)):
            g = full_grad(model, tokens, rate=0.3, seed=99)
            fd = fd_grad(model, tokens, rate=0.3, seed=99)
            assert rel_err(g, fd) < 1e-4

    def test_trace_model_mismatch(self):
        rng = np.random.default_rng(23)
        urn = init_urn(5, 4, rng)
        lstm = init_lstm(5, 4, 3, rng)
        tokens = random_tokens(rng, 5, 5)
        _, trace = forward_sequence(urn, tokens)
        with pytest.raises(ValueError):
            backward_batch(lstm, trace, np.zeros((1, 5, 5)))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(24)
        vocab = Vocab(names=("<s>", "</s>", "a", "b", "c"))
        meta = {"task": "demo", "seed": 3}
        for model in (init_urn(5, 6, rng), init_lstm(5, 6, 4, rng)):
            path = tmp_path / "model.ckpt"
            save_checkpoint(path, model, vocab, meta)
            loaded, vocab2, meta2 = load_checkpoint(path)
            assert np.array_equal(params_to_vector(loaded), params_to_vector(model))
            assert vocab2 == vocab
            assert meta2 == meta
            assert type(loaded) is type(model)

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "bogus.json"
        path.write_text("{}")
        with pytest.raises(ValueError):
            load_checkpoint(path)
