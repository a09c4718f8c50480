"""Shape, probability, consistency, and gradient tests for the encoder–decoder."""

import math

import numpy as np
import pytest

from ngramgrad import autodiff as ad
from ngramgrad import seq2seq
from ngramgrad.autodiff import Value
from ngramgrad.corpus import BOS, EOS
from ngramgrad.seq2seq import (
    ModelParams,
    StepOutput,
    attention_context,
    cross_entropy_loss,
    decode_greedy,
    decode_teacher_forced,
    default_max_len,
    encode,
    init_params,
    load_checkpoint,
    save_checkpoint,
)

VS, VT, E, H, A = 8, 8, 3, 4, 3


@pytest.fixture
def params():
    return init_params(VS, VT, E, H, A, np.random.default_rng(42))


def zero_params():
    p = init_params(VS, VT, E, H, A, np.random.default_rng(0))
    for _, v in p.named():
        v.data[...] = 0.0
    return p


class TestEncode:
    def test_state_stack_shape(self, params):
        for L in (1, 3, 7):
            states = encode([4] * L, params)
            assert states.shape == (L, H)

    def test_identical_inputs_identical_states(self, params):
        a = encode([4, 5, 6], params)
        b = encode([4, 5, 6], params)
        np.testing.assert_array_equal(a.data, b.data)

    def test_zero_weights_give_constant_states(self):
        states = encode([4, 5, 6, 7], zero_params())
        # zero weights: every gate input is 0, h starts at 0 and stays there
        np.testing.assert_array_equal(states.data, np.zeros((4, H)))

    def test_empty_source_rejected(self, params):
        with pytest.raises(ValueError, match="empty"):
            encode([], params)


class TestAttention:
    def test_single_position_context_is_that_state(self, params):
        enc = encode([5], params)
        state = Value(np.random.default_rng(1).normal(size=H))
        context, weights = attention_context(state, enc, params)
        np.testing.assert_allclose(weights.data, [1.0])
        np.testing.assert_allclose(context.data, enc.data[0])

    def test_weights_sum_to_one(self, params):
        enc = encode([4, 5, 6, 7, 4], params)
        state = Value(np.random.default_rng(2).normal(size=H))
        _, weights = attention_context(state, enc, params)
        assert weights.data.sum() == pytest.approx(1.0, abs=1e-12)
        assert (weights.data >= 0).all()

    def test_zero_score_vector_gives_mean_context(self, params):
        params.att_v.data[...] = 0.0
        enc = encode([4, 5, 6], params)
        state = Value(np.random.default_rng(3).normal(size=H))
        context, weights = attention_context(state, enc, params)
        np.testing.assert_allclose(weights.data, np.full(3, 1 / 3))
        np.testing.assert_allclose(context.data, enc.data.mean(axis=0), atol=1e-15)


class TestTeacherForcing:
    def test_one_output_per_forced_token(self, params):
        enc = encode([4, 5], params)
        steps = decode_teacher_forced(enc, [6, 7, 4], params)
        assert len(steps) == 3
        assert [s.token for s in steps] == [6, 7, 4]

    def test_distributions_are_probabilities(self, params):
        enc = encode([4, 5, 6], params)
        for s in decode_teacher_forced(enc, [7, 4], params):
            assert s.distribution.data.sum() == pytest.approx(1.0, abs=1e-6)
            assert (s.distribution.data > 0).all()
            assert s.prob.item() == pytest.approx(s.distribution.data[s.token])

    def test_uniform_readout_gives_uniform_probs(self):
        p = zero_params()
        # nonzero recurrent weights, but a zero output projection
        rng = np.random.default_rng(4)
        p.src_emb.data[...] = rng.uniform(-0.1, 0.1, p.src_emb.data.shape)
        enc = encode([4, 5], p)
        for s in decode_teacher_forced(enc, [6, 7], p):
            np.testing.assert_allclose(s.prob.item(), 1.0 / VT, atol=1e-12)

    def test_out_of_vocab_token_rejected(self, params):
        enc = encode([4], params)
        with pytest.raises(ValueError, match="vocabulary"):
            decode_teacher_forced(enc, [VT], params)

    def test_empty_stream_rejected(self, params):
        with pytest.raises(ValueError, match="nonempty"):
            decode_teacher_forced(encode([4], params), [], params)

    def test_step_probs_multiply_to_sequence_probability(self, params):
        # chain-rule consistency: Π_j p_j = exp(−CE)
        enc = encode([4, 5, 6], params)
        forced = [7, 6, 5, EOS]
        steps = decode_teacher_forced(enc, forced, params)
        product = math.prod(s.prob.item() for s in steps)
        ce = cross_entropy_loss(steps, forced).item()
        assert product == pytest.approx(math.exp(-ce), rel=1e-9)

    def test_dropout_needs_rng_and_changes_the_forward(self, params):
        enc = encode([4, 5], params)
        with pytest.raises(ValueError, match="random generator"):
            decode_teacher_forced(enc, [6], params, dropout=0.5)
        plain = decode_teacher_forced(encode([4, 5], params), [6], params)
        dropped = decode_teacher_forced(
            encode([4, 5], params), [6], params,
            dropout=0.5, rng=np.random.default_rng(7),
        )
        assert not np.allclose(plain[0].distribution.data, dropped[0].distribution.data)


class TestGreedy:
    def test_every_step_is_the_argmax(self, params):
        enc = encode([4, 5, 6], params)
        for s in decode_greedy(enc, 10, params):
            assert s.token == int(np.argmax(s.distribution.data))
            assert s.prob.item() == pytest.approx(s.distribution.data.max())

    def test_respects_max_len(self, params):
        enc = encode([4, 5, 6], params)
        assert len(decode_greedy(enc, 4, params)) <= 4

    def test_sentinels_never_emitted(self, params):
        enc = encode([4, 5, 6, 7], params)
        tokens = [s.token for s in decode_greedy(enc, 12, params)]
        assert EOS not in tokens

    def test_immediate_end_sentinel_yields_empty(self, params):
        # bias the readout so the end sentinel dominates every step
        params.out_b.data[...] = 0.0
        params.out_b.data[EOS] = 50.0
        enc = encode([4, 5], params)
        assert decode_greedy(enc, 8, params) == []

    def test_first_step_matches_teacher_forcing(self, params):
        # same conditioning before any feedback → identical distributions
        greedy = decode_greedy(encode([4, 5, 6], params), 5, params)
        forced = decode_teacher_forced(encode([4, 5, 6], params), [7], params)
        np.testing.assert_array_equal(
            greedy[0].distribution.data, forced[0].distribution.data
        )

    def test_max_len_zero_rejected(self, params):
        with pytest.raises(ValueError, match="max_len"):
            decode_greedy(encode([4], params), 0, params)

    def test_default_max_len_formula(self):
        assert default_max_len(3) == 11
        assert default_max_len(12) == 29


class TestCrossEntropy:
    def test_uniform_distributions_closed_form(self):
        dist = Value(np.full(VT, 1.0 / VT))
        steps = [StepOutput(4, ad.gather(dist, 4), dist) for _ in range(3)]
        ce = cross_entropy_loss(steps, [4, 5, 6]).item()
        assert ce == pytest.approx(3 * math.log(VT), rel=1e-12)

    def test_one_hot_correct_distributions_give_zero(self):
        one_hot = np.zeros(VT)
        one_hot[5] = 1.0
        dist = Value(one_hot)
        steps = [StepOutput(5, ad.gather(dist, 5), dist)]
        assert cross_entropy_loss(steps, [5]).item() == pytest.approx(0.0, abs=1e-12)

    def test_length_mismatch_rejected(self, params):
        steps = decode_teacher_forced(encode([4], params), [5, 6], params)
        with pytest.raises(ValueError, match="target"):
            cross_entropy_loss(steps, [5])

    def test_gradient_matches_finite_differences(self):
        src, tgt = [4, 5], [6, 7, EOS]
        base = init_params(VS, VT, E, H, A, np.random.default_rng(11))
        arrays = [v.data for _, v in base.named()]

        def fn(*leaves):
            p = ModelParams(*leaves)
            steps = decode_teacher_forced(encode(src, p), tgt, p)
            return cross_entropy_loss(steps, tgt)

        # floor 1e-4: gradients below it are compared absolutely, since the
        # loss is O(6) and central-difference noise sits near 5e-11
        err = ad.grad_check(fn, arrays, step=1e-5, floor=1e-4)
        assert err < 1e-5, f"max relative gradient error {err:.2e}"


class TestCheckpoint:
    def test_round_trip_is_bit_identical(self, tmp_path, params):
        state = {
            "src_emb.eg": np.random.default_rng(5).normal(size=(VS, E)),
            "out_b.ed": np.zeros(VT),
        }
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, params, "cafebabe", state)
        loaded, loaded_state, fp = load_checkpoint(path)
        assert fp == "cafebabe"
        for (name, v), (_, w) in zip(params.named(), loaded.named()):
            np.testing.assert_array_equal(v.data, w.data, err_msg=name)
        for name in state:
            np.testing.assert_array_equal(state[name], loaded_state[name])

    def test_fingerprint_mismatch_rejected(self, tmp_path, params):
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, params, "cafebabe")
        with pytest.raises(ValueError, match="fingerprint"):
            load_checkpoint(path, expect_fingerprint="deadbeef")

    def test_truncated_file_rejected(self, tmp_path, params):
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, params, "cafebabe")
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - 16])
        with pytest.raises(ValueError, match="truncated"):
            load_checkpoint(path)
