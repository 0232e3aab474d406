"""Temporal soft attention over frames and the visual/language blending gate.

Reductions over the frame axis sum the terms in sorted order and per-frame
projections are computed frame by frame, so permuting the frames permutes the
attention weights and leaves the context vector bit-for-bit unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .numerics import DimensionError, DomainError, frame_sum, sigmoid


@dataclass
class AttentionWeights:
    W_a: np.ndarray  # (d_a, d_h) applied to the decoder hidden state
    U_a: np.ndarray  # (d_a, d_h) applied to projected frames
    b_a: np.ndarray  # (d_a,)
    w: np.ndarray  # (d_a,)


def per_frame_matmul(frames: np.ndarray, W: np.ndarray) -> np.ndarray:
    """``frames @ W.T`` for (…, n, k) input, one frame at a time.

    A single gemm is not row-position independent, which would break exact
    frame-permutation equivariance.
    """
    out = np.empty(frames.shape[:-1] + (W.shape[0],), dtype=np.result_type(frames, W))
    for i in range(frames.shape[-2]):
        out[..., i, :] = frames[..., i, :] @ W.T
    return out


def project_features(frames: np.ndarray, W_v: np.ndarray) -> np.ndarray:
    """Map (…, n, d_f) frame features into the decoder's d_h space."""
    frames = np.asarray(frames, dtype=float)
    if frames.shape[-1] != W_v.shape[1]:
        raise DimensionError(f"feature projection {W_v.shape} cannot take frames {frames.shape}")
    return per_frame_matmul(frames, W_v)


def attention_forward(h, Vp, aw: AttentionWeights, UV=None, frame_mask=None, literal_eq10: bool = False):
    """Scores, weights and context vector for query ``h`` over frames ``Vp``.

    ``h`` is (…, d_h) and ``Vp`` is (…, n, d_h). ``UV`` is the cached frame
    term ``U_a Vp`` (reused across timesteps). With ``literal_eq10`` the
    weighted sum is additionally scaled by 1/n.
    Returns ``(c, alpha, cache)``.
    """
    n = Vp.shape[-2]
    if n == 0:
        raise DomainError("temporal attention over zero frames")
    if h.shape[-1] != aw.W_a.shape[1] or Vp.shape[-1] != aw.U_a.shape[1]:
        raise DimensionError(f"attention: h {h.shape}, frames {Vp.shape} vs W_a {aw.W_a.shape}, U_a {aw.U_a.shape}")
    if UV is None:
        UV = per_frame_matmul(Vp, aw.U_a)
    q = h @ aw.W_a.T
    pre = np.tanh(q[..., None, :] + UV + aw.b_a)
    e = (pre * aw.w).sum(axis=-1)
    if frame_mask is not None:
        e = np.where(frame_mask, e, -np.inf)
    z = np.exp(e - e.max(axis=-1, keepdims=True))
    alpha = z / frame_sum(z, axis=-1)[..., None]
    if literal_eq10:
        n_eff = frame_mask.sum(axis=-1) if frame_mask is not None else np.full(alpha.shape[:-1], n)
        scale = 1.0 / np.asarray(n_eff, dtype=alpha.dtype)
    else:
        scale = np.ones(alpha.shape[:-1], dtype=alpha.dtype)
    c = frame_sum(alpha[..., None] * Vp, axis=-2) * scale[..., None]
    return c, alpha, (h, Vp, pre, alpha, scale)


def attention_backward(dc, cache, aw: AttentionWeights, grads: dict, prefix: str = "attn"):
    """Returns ``(dh, dVp)``; parameter grads accumulate into ``grads``."""
    h, Vp, pre, alpha, scale = cache
    dc = dc * scale[..., None]
    dVp = alpha[..., None] * dc[..., None, :]
    dalpha = (Vp * dc[..., None, :]).sum(axis=-1)
    de = alpha * (dalpha - (alpha * dalpha).sum(axis=-1, keepdims=True))
    grads[prefix + ".w"] += (de[..., None] * pre).reshape(-1, pre.shape[-1]).sum(axis=0)
    dpre = de[..., None] * aw.w * (1.0 - pre * pre)
    dq = dpre.sum(axis=-2)
    grads[prefix + ".b_a"] += dq.reshape(-1, dq.shape[-1]).sum(axis=0)
    grads[prefix + ".W_a"] += np.atleast_2d(dq).T @ np.atleast_2d(h)
    flat_dpre = dpre.reshape(-1, dpre.shape[-1])
    grads[prefix + ".U_a"] += flat_dpre.T @ Vp.reshape(-1, Vp.shape[-1])
    dVp = dVp + dpre @ aw.U_a
    return dq @ aw.W_a, dVp


def temporal_attention(h_t, Vp, aw: AttentionWeights, literal_eq10: bool = False):
    """Context vector and frame weights ``(c_t, alpha)`` for one query state."""
    c, alpha, _ = attention_forward(np.asarray(h_t, float), np.asarray(Vp, float), aw, literal_eq10=literal_eq10)
    return c, alpha


def adjusted_gate(h_t, W_s: np.ndarray):
    """Scalar share of visual context; ``W_s`` is (1, d_h)."""
    h_t = np.asarray(h_t, dtype=float)
    if W_s.shape != (1, h_t.shape[-1]):
        raise DimensionError(f"gate weights {W_s.shape} vs hidden state {h_t.shape}")
    beta = sigmoid(h_t @ W_s[0])
    return beta


def blend_context(beta, c_t, h_bar_t):
    """``beta * c_t + (1 - beta) * h_bar_t`` with exact endpoints at beta in {0, 1}."""
    c_t = np.asarray(c_t, dtype=float)
    h_bar_t = np.asarray(h_bar_t, dtype=float)
    if c_t.shape != h_bar_t.shape:
        raise DimensionError(f"cannot blend context {c_t.shape} with hidden state {h_bar_t.shape}")
    beta = np.asarray(beta, dtype=float)
    if np.any(beta < 0) or np.any(beta > 1):
        raise DomainError(f"gate value outside [0, 1]: {beta}")
    return mix(beta[..., None] if beta.ndim else beta, c_t, h_bar_t)


def mix(b, c, h):
    # The clamp only removes last-ulp rounding overshoot of the convex combination.
    return np.clip(b * c + (1.0 - b) * h, np.minimum(c, h), np.maximum(c, h))


@dataclass
class TraceEntry:
    t: int
    alpha: list[float]
    beta: float
    token: str
    video_id: str = ""

    def to_json(self) -> str:
        return json.dumps({"video_id": self.video_id, "t": self.t, "token": self.token, "beta": self.beta,
                           "alpha": self.alpha})


def write_trace_jsonl(path, entries: Iterable[TraceEntry]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in entries:
            fh.write(e.to_json() + "\n")


def read_trace_jsonl(path) -> list[TraceEntry]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out.append(TraceEntry(int(rec["t"]), list(rec["alpha"]), float(rec["beta"]), str(rec["token"]),
                                      str(rec.get("video_id", ""))))
    return out
