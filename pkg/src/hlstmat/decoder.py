"""The hierarchical decode step and teacher-forced sequence losses.

One step: embed the previous word, advance the bottom LSTM, feed its hidden
state to the top LSTM, attend over projected frames with the *current* bottom
state, gate between the attended context and the top state, then predict the
next word from ``[h; c_bar]`` through a tanh MLP.

Everything is vectorised over a leading batch axis; the backward pass is
written by hand and checked against central differences in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .attention import attention_backward, attention_forward, mix, per_frame_matmul
from .data import BOS, EOS, PAD, Caption, VideoFeatures
from .model import ModelConfig, ModelParams
from .numerics import DomainError, NumericError, dropout_mask, finite_difference_check, log_softmax, sigmoid
from .recurrent import init_states, lstm_backward, lstm_forward, mean_frames


@dataclass
class DecoderState:
    h: np.ndarray
    m: np.ndarray
    h_bar: np.ndarray
    m_bar: np.ndarray

    def take(self, idx) -> "DecoderState":
        return DecoderState(self.h[idx], self.m[idx], self.h_bar[idx], self.m_bar[idx])


@dataclass
class VideoContext:
    """Per-video quantities computed once and reused at every step."""

    frames: np.ndarray  # (..., n, d_f)
    Vp: np.ndarray  # (..., n, d_h) projected frames
    UV: np.ndarray  # (..., n, d_a) attention frame term
    frame_mask: np.ndarray | None = None

    def take(self, idx) -> "VideoContext":
        fm = None if self.frame_mask is None else self.frame_mask[idx]
        return VideoContext(self.frames[idx], self.Vp[idx], self.UV[idx], fm)


def encode_video(frames, params: ModelParams, frame_mask=None) -> VideoContext:
    frames = np.asarray(frames).astype(params.dtype, copy=False)
    if frames.shape[-1] != params.config.d_f:
        raise DomainError(f"features have d_f={frames.shape[-1]}, model expects {params.config.d_f}")
    Vp = per_frame_matmul(frames, params["feat_proj.W_v"])
    return VideoContext(frames, Vp, per_frame_matmul(Vp, params["attn.U_a"]), frame_mask)


def initial_state(ctx: VideoContext, params: ModelParams) -> DecoderState:
    h0, m0 = init_states(ctx.frames, params["init.W_ih"], params["init.W_ic"], ctx.frame_mask)
    if params.config.top_init == "meanpool":
        return DecoderState(h0, m0, h0.copy(), m0.copy())
    return DecoderState(h0, m0, np.zeros_like(h0), np.zeros_like(m0))


def _step_forward(params: ModelParams, tokens, state: DecoderState, ctx: VideoContext, masks=None, beta_override=None):
    cfg = params.config
    y = params["embedding"][tokens]
    h, m, c_bot = lstm_forward(y, state.h, state.m, params.lstm_bottom)
    hd = h * masks[0] if masks is not None else h
    hb, mb, c_top = lstm_forward(hd, state.h_bar, state.m_bar, params.lstm_top)
    hbd = hb * masks[1] if masks is not None else hb
    aw = params.attn
    c, alpha, c_att = attention_forward(hd, ctx.Vp, aw, ctx.UV, ctx.frame_mask, cfg.literal_eq10)
    if beta_override is None:
        beta = sigmoid(hd @ params["gate.W_s"][0])
    else:
        beta = np.full(hd.shape[:-1], beta_override, dtype=hd.dtype)
    cbar = mix(beta[..., None], c, hbd)
    first = hd if cfg.output_hidden == "bottom" else hbd
    inp = np.concatenate([first, cbar], axis=-1)
    s = np.tanh(inp @ params["out.W_p"].T + params["out.b_p"])
    sd = s * masks[2] if masks is not None else s
    logits = sd @ params["out.U_p"].T + params["out.d"]
    logp = log_softmax(logits)
    if not np.all(np.isfinite(logp)):
        raise NumericError("non-finite log-probabilities in decode step")
    cache = (tokens, c_bot, c_top, c_att, hd, hbd, c, beta, inp, s, sd, masks, beta_override is not None)
    return logp, DecoderState(h, m, hb, mb), (alpha, beta), cache


def _step_backward(params: ModelParams, dlogits, carry, cache, grads):
    tokens, c_bot, c_top, c_att, hd, hbd, c, beta, inp, s, sd, masks, beta_fixed = cache
    dh_next, dm_next, dhb_next, dmb_next = carry
    d_h = params.config.d_h

    grads["out.U_p"] += dlogits.T @ sd
    grads["out.d"] += dlogits.sum(axis=0)
    ds = dlogits @ params["out.U_p"]
    if masks is not None:
        ds = ds * masks[2]
    ds = ds * (1.0 - s * s)
    grads["out.W_p"] += ds.T @ inp
    grads["out.b_p"] += ds.sum(axis=0)
    dinp = ds @ params["out.W_p"]
    dfirst, dcbar = dinp[:, :d_h], dinp[:, d_h:]

    b = beta[:, None]
    dc = b * dcbar
    dhbd = (1.0 - b) * dcbar
    if params.config.output_hidden == "bottom":
        dhd = dfirst.copy()
    else:
        dhd = np.zeros_like(dfirst)
        dhbd = dhbd + dfirst
    if not beta_fixed:
        dz = (dcbar * (c - hbd)).sum(axis=1) * beta * (1.0 - beta)
        grads["gate.W_s"] += (dz @ hd)[None, :]
        dhd += dz[:, None] * params["gate.W_s"][0]

    dq, dVp = attention_backward(dc, c_att, params.attn, grads)
    dhd += dq

    dhb = (dhbd * masks[1] if masks is not None else dhbd) + dhb_next
    dx_top, dhb_prev, dmb_prev = lstm_backward(dhb, dmb_next, c_top, params.lstm_top, grads, "top")
    dhd += dx_top
    dh = (dhd * masks[0] if masks is not None else dhd) + dh_next
    dy, dh_prev, dm_prev = lstm_backward(dh, dm_next, c_bot, params.lstm_bottom, grads, "bottom")
    np.add.at(grads["embedding"], tokens, dy)
    return (dh_prev, dm_prev, dhb_prev, dmb_prev), dVp


def decode_step(prev_token, state: DecoderState, ctx: VideoContext, params: ModelParams,
                train_mode: bool = False, rng: np.random.Generator | None = None, dropout: float = 0.5,
                beta_override: float | None = None):
    """Advance one word.

    Returns ``(log_probs, new_state, (alpha, beta))``. Works for a single
    sequence (1-D state vectors) or a batch. ``train_mode`` enables inverted
    dropout on the bottom output, the top output and the MLP activation;
    ``beta_override`` pins the gate (diagnostics only).
    """
    masks = None
    if train_mode and dropout > 0:
        rng = rng if rng is not None else np.random.default_rng()
        shp, dt = np.shape(state.h), params.dtype
        masks = (dropout_mask(rng, shp, dropout, dt), dropout_mask(rng, shp, dropout, dt),
                 dropout_mask(rng, shp[:-1] + (params.config.d_p,), dropout, dt))
    logp, new_state, trace, _ = _step_forward(params, prev_token, state, ctx, masks, beta_override)
    return logp, new_state, trace


@dataclass
class Batch:
    frames: np.ndarray  # (B, n_max, d_f), zero padded
    frame_mask: np.ndarray | None  # (B, n_max) or None when all videos share n
    tokens: np.ndarray  # (B, L_max) padded with PAD

    @property
    def n_predicted(self) -> int:
        return int((self.tokens[:, 1:] != PAD).sum())


def make_batch(pairs: Sequence[tuple[VideoFeatures, Caption]]) -> Batch:
    if not pairs:
        raise DomainError("empty batch")
    ns = [v.n for v, _ in pairs]
    d_f = pairs[0][0].d_f
    n_max = max(ns)
    frames = np.zeros((len(pairs), n_max, d_f))
    for i, (v, _) in enumerate(pairs):
        frames[i, : v.n] = v.frames
    mask = None
    if min(ns) != n_max:
        mask = np.arange(n_max)[None, :] < np.asarray(ns)[:, None]
    L = max(len(c.tokens) for _, c in pairs)
    tokens = np.full((len(pairs), L), PAD, dtype=np.int64)
    for i, (_, c) in enumerate(pairs):
        tokens[i, : len(c.tokens)] = c.tokens
    return Batch(frames, mask, tokens)


def nll_and_grad(params: ModelParams, batch: Batch, train_mode: bool = False, rng=None,
                 dropout: float = 0.5, need_grad: bool = True):
    """Summed negative log-likelihood over all predicted tokens of ``batch``.

    Returns ``(loss_sum, n_tokens, grads)``; ``grads`` is ``None`` when
    ``need_grad`` is false. PAD targets are masked out.
    """
    ctx = encode_video(batch.frames, params, batch.frame_mask)
    state = initial_state(ctx, params)
    B, L = batch.tokens.shape
    use_dropout = train_mode and dropout > 0
    if use_dropout and rng is None:
        rng = np.random.default_rng()
    caches, dlogits_all = [], []
    total = params.dtype.type(0)
    dt = params.dtype
    for t in range(1, L):
        masks = None
        if use_dropout:
            masks = (dropout_mask(rng, (B, params.config.d_h), dropout, dt),
                     dropout_mask(rng, (B, params.config.d_h), dropout, dt),
                     dropout_mask(rng, (B, params.config.d_p), dropout, dt))
        logp, state, _, cache = _step_forward(params, batch.tokens[:, t - 1], state, ctx, masks)
        target = batch.tokens[:, t]
        valid = (target != PAD).astype(dt)
        total = total - (logp[np.arange(B), target] * valid).sum()
        if need_grad:
            dl = np.exp(logp)
            dl[np.arange(B), target] -= 1.0
            dlogits_all.append(dl * valid[:, None])
            caches.append(cache)
    n_tok = batch.n_predicted
    if not np.isfinite(total):
        raise NumericError("loss is not finite")
    if not need_grad:
        return total, n_tok, None

    grads = params.zeros_like()
    d_h = params.config.d_h
    carry = tuple(np.zeros((B, d_h), dtype=dt) for _ in range(4))
    dVp = np.zeros_like(ctx.Vp)
    for cache, dl in zip(reversed(caches), reversed(dlogits_all)):
        carry, dVp_t = _step_backward(params, dl, carry, cache, grads)
        dVp += dVp_t
    dh0, dm0, dhb0, dmb0 = carry
    if params.config.top_init == "meanpool":
        dh0 = dh0 + dhb0
        dm0 = dm0 + dmb0
    vbar = mean_frames(ctx.frames, ctx.frame_mask)
    grads["init.W_ih"] += dh0.T @ vbar
    grads["init.W_ic"] += dm0.T @ vbar
    grads["feat_proj.W_v"] += dVp.reshape(-1, d_h).T @ ctx.frames.reshape(-1, ctx.frames.shape[-1])
    return total, n_tok, grads


def sequence_nll(video: VideoFeatures, caption: Caption, params: ModelParams,
                 train_mode: bool = False, rng=None, dropout: float = 0.5) -> float:
    """Teacher-forced ``-sum_t log P(z_t | z_<t, V)`` over every word after BOS, EOS included."""
    if len(caption.tokens) < 3:
        raise DomainError("caption must hold BOS, at least one word and EOS")
    loss, _, _ = nll_and_grad(params, make_batch([(video, caption)]), train_mode, rng, dropout, need_grad=False)
    return loss


def batch_nll(pairs: Sequence[tuple[VideoFeatures, Caption]], params: ModelParams,
              train_mode: bool = False, rng=None, dropout: float = 0.5) -> float:
    """Mean loss per predicted token over the batch."""
    loss, n_tok, _ = nll_and_grad(params, make_batch(pairs), train_mode, rng, dropout, need_grad=False)
    return loss / n_tok


def loss_and_grad(params: ModelParams, pairs: Sequence[tuple[VideoFeatures, Caption]],
                  train_mode: bool = False, rng=None, dropout: float = 0.5):
    """``(batch_nll, gradient of batch_nll)``."""
    loss, n_tok, grads = nll_and_grad(params, make_batch(pairs), train_mode, rng, dropout)
    for g in grads.values():
        g /= n_tok
    return loss / n_tok, grads


TINY_DIMS = dict(vocab_size=12, d_f=5, d_e=8, d_h=8, d_a=8, d_p=8)


def tiny_problem(seed: int = 0, n_frames: int = 4, steps: int = 5, **overrides):
    """Small random model plus one (video, caption) pair for gradient checks.

    The caption holds ``steps`` predicted tokens (words then EOS).
    """
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(**{**TINY_DIMS, **overrides})
    params = ModelParams.init(cfg, seed=seed)
    words = rng.integers(EOS + 2, cfg.vocab_size, size=steps - 1).tolist()
    video = VideoFeatures("tiny", rng.normal(size=(n_frames, cfg.d_f)))
    return params, [(video, Caption("tiny", [BOS] + words + [EOS]))]


def check_gradients(params: ModelParams, pairs, eps: float = 1e-5, tol: float = 1e-4, grad_fn=None):
    """Central-difference check of ``loss_and_grad`` (or ``grad_fn``) over every parameter.

    Perturbed losses are evaluated in extended precision so that gradients
    near 1e-8 are not buried under f64 rounding of the loss.
    """
    grad_fn = grad_fn or loss_and_grad
    return finite_difference_check(
        lambda p: grad_fn(params, pairs),
        params,
        eps,
        tol,
        numeric_loss_fn=lambda p: batch_nll(pairs, params.astype(np.longdouble)),
    )
