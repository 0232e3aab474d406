import math

import numpy as np
import pytest

from hlstmat.data import BOS, EOS, Caption, VideoFeatures
from hlstmat.decoder import (
    VideoContext,
    batch_nll,
    check_gradients,
    decode_step,
    encode_video,
    initial_state,
    loss_and_grad,
    sequence_nll,
    tiny_problem,
)
from hlstmat.model import ModelConfig, ModelParams
from hlstmat.numerics import DomainError, NumericError
from helpers import random_caption, random_model, random_video
from scalar_oracle import Oracle

VARIANTS = [{}, {"top_init": "meanpool"}, {"output_hidden": "top"}, {"literal_eq10": True}]


def run_steps(params, video, tokens):
    ctx = encode_video(video.frames, params)
    state = initial_state(ctx, params)
    out = []
    for tok in tokens:
        logp, state, (alpha, beta) = decode_step(tok, state, ctx, params)
        out.append((logp, alpha, beta))
    return out


@pytest.mark.parametrize("variant", VARIANTS)
def test_decode_step_matches_scalar_oracle_smallest(variant):
    for seed in range(5):
        p = random_model(seed, vocab_size=4, d_f=3, d_e=2, d_h=2, d_a=2, d_p=2, **variant)
        video = random_video(seed, n=2, d_f=3)
        oracle = Oracle(p, video.frames)
        state = oracle.initial_state()
        tokens = [BOS, 3, 2, 3]
        for (logp, alpha, beta), tok in zip(run_steps(p, video, tokens), tokens):
            ref, state, ref_alpha, ref_beta = oracle.step(tok, state)
            np.testing.assert_allclose(logp, ref, rtol=0, atol=1e-12)
            np.testing.assert_allclose(alpha, ref_alpha, rtol=0, atol=1e-12)
            assert beta == pytest.approx(ref_beta, abs=1e-12)


def test_log_probs_are_normalised_and_zero_model_is_uniform():
    p = random_model(0)
    (logp, _, _), = run_steps(p, random_video(0), [BOS])
    assert abs(np.exp(logp).sum() - 1.0) <= 1e-10
    z = ModelParams.zeros(p.config)
    (logp, _, beta), = run_steps(z, random_video(0), [BOS])
    np.testing.assert_allclose(logp, -math.log(12), rtol=1e-15)
    assert beta == 0.5


def test_uniform_model_nll():
    z = ModelParams.zeros(random_model(0).config)
    cap = random_caption(0, n_words=6)
    assert sequence_nll(random_video(0), cap, z) == pytest.approx(7 * math.log(12), rel=1e-14)


@pytest.mark.parametrize("seed", range(10))
def test_sequence_nll_matches_oracle_and_is_nonnegative(seed):
    p = random_model(seed)
    video, cap = random_video(seed), random_caption(seed)
    loss = sequence_nll(video, cap, p)
    assert loss >= 0
    assert loss == pytest.approx(Oracle(p, video.frames).sequence_nll(cap.tokens), abs=1e-10)


def test_sequence_nll_rejects_short_caption():
    p = random_model(0)
    cap = Caption.__new__(Caption)
    cap.video_id, cap.tokens = "v", [BOS, EOS]
    with pytest.raises(DomainError):
        sequence_nll(random_video(0), cap, p)


def test_batch_nll_reductions():
    p = random_model(1)
    a = (random_video(1, n=4), random_caption(1, n_words=3))
    b = (random_video(2, n=6), random_caption(2, n_words=7))
    assert batch_nll([a], p) == pytest.approx(sequence_nll(*a, p) / 4, rel=1e-14)
    assert batch_nll([a, a], p) == pytest.approx(batch_nll([a], p), rel=1e-14)
    want = (sequence_nll(*a, p) + sequence_nll(*b, p)) / (4 + 8)
    assert batch_nll([a, b], p) == pytest.approx(want, rel=1e-13)
    with pytest.raises(DomainError):
        batch_nll([], p)


def test_eval_mode_is_bit_deterministic():
    p = random_model(2)
    r1 = run_steps(p, random_video(2), [BOS, 5, 6])
    r2 = run_steps(p, random_video(2), [BOS, 5, 6])
    for (a, b, c), (x, y, z) in zip(r1, r2):
        assert np.array_equal(a, x) and np.array_equal(b, y) and c == z


def test_train_mode_dropout_is_seeded():
    p = random_model(3)
    video = random_video(3)
    ctx = encode_video(video.frames, p)
    s0 = initial_state(ctx, p)
    eval_logp, _, _ = decode_step(BOS, s0, ctx, p)
    a, _, _ = decode_step(BOS, s0, ctx, p, train_mode=True, rng=np.random.default_rng(9))
    b, _, _ = decode_step(BOS, s0, ctx, p, train_mode=True, rng=np.random.default_rng(9))
    assert np.array_equal(a, b)
    assert not np.allclose(a, eval_logp)
    off, _, _ = decode_step(BOS, s0, ctx, p, train_mode=True, rng=np.random.default_rng(9), dropout=0.0)
    np.testing.assert_array_equal(off, eval_logp)


def test_closed_gate_ignores_frame_content():
    p = random_model(4)
    video = random_video(4)
    ctx = encode_video(video.frames, p)
    state = initial_state(ctx, p)
    other = encode_video(np.random.default_rng(99).normal(size=video.frames.shape), p)
    swapped = VideoContext(ctx.frames, other.Vp, other.UV)
    s1 = s2 = state
    for tok in (BOS, 5, 7, 9):
        l1, s1, _ = decode_step(tok, s1, ctx, p, beta_override=0.0)
        l2, s2, _ = decode_step(tok, s2, swapped, p, beta_override=0.0)
        np.testing.assert_array_equal(l1, l2)


def test_non_finite_parameters_raise_numeric_error():
    p = random_model(5)
    p["out.d"][0] = np.nan
    with pytest.raises(NumericError):
        run_steps(p, random_video(5), [BOS])


def test_token_outside_vocabulary():
    p = random_model(5)
    with pytest.raises(IndexError):
        run_steps(p, random_video(5), [12])


def test_feature_dimension_mismatch():
    p = random_model(5)
    with pytest.raises(DomainError):
        encode_video(np.zeros((4, 6)), p)


@pytest.mark.parametrize("variant", VARIANTS)
def test_full_model_gradient(variant):
    params, pairs = tiny_problem(7, **variant)
    rep = check_gradients(params, pairs)
    assert rep.passed, rep


def test_gradient_with_ragged_batch():
    params, _ = tiny_problem(8)
    pairs = [(random_video(1, n=4), random_caption(1, n_words=2)),
             (random_video(2, n=2), random_caption(2, n_words=4))]
    rep = check_gradients(params, pairs)
    assert rep.passed, rep


def test_gradient_touches_only_used_embedding_rows():
    params, pairs = tiny_problem(9)
    _, grads = loss_and_grad(params, pairs)
    used = set(pairs[0][1].tokens[:-1])  # inputs are every token but the last
    for row in range(12):
        assert bool(np.any(grads["embedding"][row])) == (row in used)


def test_ragged_batch_loss_equals_separate_sums():
    p = random_model(6)
    pairs = [(random_video(k, n=3 + k), random_caption(k, n_words=2 + 2 * k)) for k in range(3)]
    total = sum(sequence_nll(v, c, p) for v, c in pairs)
    n_tok = sum(len(c.tokens) - 1 for _, c in pairs)
    assert batch_nll(pairs, p) == pytest.approx(total / n_tok, rel=1e-13)


def test_float32_forward_runs():
    p = random_model(7).astype(np.float32)
    loss = batch_nll([(random_video(7), random_caption(7))], p)
    assert np.isfinite(loss)
    assert batch_nll([(random_video(7), random_caption(7))], random_model(7)) == pytest.approx(float(loss), rel=1e-4)


def test_video_features_integrity():
    with pytest.raises(Exception):
        VideoFeatures("v", np.zeros(3))
    ModelConfig(vocab_size=5, d_f=2)  # defaults fill the remaining widths
