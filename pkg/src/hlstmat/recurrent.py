"""LSTM cell, word embedding lookup and mean-pool state initialisation.

All functions accept either single vectors or a leading batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import DimensionError, frame_sum, sigmoid


@dataclass
class LstmWeights:
    """Gate weights stacked row-wise in the order input, forget, output, candidate.

    ``W`` is (4*d_h, d_in), ``U`` is (4*d_h, d_h), ``b`` is (4*d_h,). The
    per-gate matrices are exposed as views.
    """

    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        d4 = self.U.shape[0]
        if d4 % 4 or self.U.shape != (d4, d4 // 4) or self.W.shape[0] != d4 or self.b.shape != (d4,):
            raise DimensionError(f"inconsistent LSTM weights W{self.W.shape} U{self.U.shape} b{self.b.shape}")

    @classmethod
    def from_gates(cls, W_i, W_f, W_o, W_g, U_i, U_f, U_o, U_g, b_i, b_f, b_o, b_g) -> "LstmWeights":
        return cls(np.vstack([W_i, W_f, W_o, W_g]), np.vstack([U_i, U_f, U_o, U_g]),
                   np.concatenate([b_i, b_f, b_o, b_g]))

    @property
    def d_h(self) -> int:
        return self.U.shape[1]

    @property
    def d_in(self) -> int:
        return self.W.shape[1]

    def _gate(self, arr, k):
        d = self.d_h
        return arr[k * d:(k + 1) * d]

    W_i = property(lambda s: s._gate(s.W, 0))
    W_f = property(lambda s: s._gate(s.W, 1))
    W_o = property(lambda s: s._gate(s.W, 2))
    W_g = property(lambda s: s._gate(s.W, 3))
    U_i = property(lambda s: s._gate(s.U, 0))
    U_f = property(lambda s: s._gate(s.U, 1))
    U_o = property(lambda s: s._gate(s.U, 2))
    U_g = property(lambda s: s._gate(s.U, 3))
    b_i = property(lambda s: s._gate(s.b, 0))
    b_f = property(lambda s: s._gate(s.b, 1))
    b_o = property(lambda s: s._gate(s.b, 2))
    b_g = property(lambda s: s._gate(s.b, 3))


def lstm_forward(y, h_prev, m_prev, w: LstmWeights):
    """One cell update; returns ``(h, m, cache)`` where cache feeds :func:`lstm_backward`."""
    y = np.asarray(y)
    if y.shape[-1] != w.d_in or h_prev.shape[-1] != w.d_h or m_prev.shape[-1] != w.d_h:
        raise DimensionError(
            f"lstm_step: input {y.shape}, h {h_prev.shape}, m {m_prev.shape} vs weights d_in={w.d_in}, d_h={w.d_h}")
    d = w.d_h
    a = y @ w.W.T + h_prev @ w.U.T + w.b
    ifo = sigmoid(a[..., :3 * d])
    i, f, o = ifo[..., :d], ifo[..., d:2 * d], ifo[..., 2 * d:]
    g = np.tanh(a[..., 3 * d:])
    m = f * m_prev + i * g
    tm = np.tanh(m)
    h = o * tm
    return h, m, (y, h_prev, m_prev, i, f, o, g, tm)


def lstm_step(y, h_prev, m_prev, w: LstmWeights):
    h, m, _ = lstm_forward(y, h_prev, m_prev, w)
    return h, m


def lstm_backward(dh, dm, cache, w: LstmWeights, grads: dict, prefix: str):
    """Backprop one cell update.

    ``dh``/``dm`` are the total upstream gradients w.r.t. this step's outputs.
    Weight gradients are accumulated into ``grads[prefix + ".W"|".U"|".b"]``.
    Returns ``(dy, dh_prev, dm_prev)``.
    """
    y, h_prev, m_prev, i, f, o, g, tm = cache
    dm = dm + dh * o * (1.0 - tm * tm)
    da = np.concatenate(
        [dm * g * i * (1.0 - i), dm * m_prev * f * (1.0 - f), dh * tm * o * (1.0 - o), dm * i * (1.0 - g * g)],
        axis=-1,
    )
    da2 = np.atleast_2d(da)
    grads[prefix + ".W"] += da2.T @ np.atleast_2d(y)
    grads[prefix + ".U"] += da2.T @ np.atleast_2d(h_prev)
    grads[prefix + ".b"] += da2.sum(axis=0)
    return da @ w.W, da @ w.U, dm * f


def embed(token_id, E: np.ndarray) -> np.ndarray:
    """Row lookup; ``token_id`` may be an int or an integer array."""
    ids = np.asarray(token_id)
    if np.any(ids < 0) or np.any(ids >= E.shape[0]):
        raise IndexError(f"token id {token_id} outside vocabulary of size {E.shape[0]}")
    return E[ids]


def mean_frames(frames: np.ndarray, frame_mask: np.ndarray | None = None) -> np.ndarray:
    """Average frame feature; ``frame_mask`` (…, n) excludes padded frames."""
    if frame_mask is None:
        return frame_sum(frames, axis=-2) / frames.shape[-2]
    w = frame_mask.astype(frames.dtype)
    return frame_sum(frames * w[..., None], axis=-2) / w.sum(axis=-1, keepdims=True)


def init_states(frames: np.ndarray, W_ih: np.ndarray, W_ic: np.ndarray, frame_mask=None):
    """Bottom-layer initial ``(h_0, m_0)`` projected from the mean frame feature."""
    if frames.shape[-1] != W_ih.shape[1] or W_ih.shape != W_ic.shape:
        raise DimensionError(f"init projection {W_ih.shape}/{W_ic.shape} vs features {frames.shape}")
    vbar = mean_frames(frames, frame_mask)
    return vbar @ W_ih.T, vbar @ W_ic.T
