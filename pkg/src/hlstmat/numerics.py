"""Dense array helpers, error types and the finite-difference gradient oracle.

Arrays are plain ``numpy.ndarray`` objects. Every layer in this package ships a
hand-derived backward pass; :func:`finite_difference_check` is the contract
those passes are held to.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np


class DimensionError(ValueError):
    """Operand shapes do not line up."""


class DomainError(ValueError):
    """Argument outside the operation's domain (empty input, bad limit, ...)."""


class NumericError(FloatingPointError):
    """A NaN or Inf showed up where only finite values are allowed."""


class ContractError(RuntimeError):
    """A caller-supplied callable broke its contract (e.g. non-determinism)."""


def check_finite(x: np.ndarray, what: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values in {what}")
    return x


def matvec(W: np.ndarray, x: np.ndarray) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    x = np.asarray(x, dtype=float)
    if W.ndim != 2 or x.ndim != 1 or W.shape[1] != x.shape[0]:
        raise DimensionError(f"matvec: cannot apply {W.shape} to {x.shape}")
    return W @ x


def _floating(x) -> np.ndarray:
    x = np.asarray(x)
    return x if np.issubdtype(x.dtype, np.floating) else x.astype(np.float64)


def sigmoid(x):
    # Two branches so neither exp() can overflow.
    x = _floating(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else out[()]


def tanh(x):
    return np.tanh(x)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    x = _floating(x)
    if x.size == 0 or x.shape[axis] == 0:
        raise DomainError("softmax of an empty vector")
    z = np.exp(x - np.max(x, axis=axis, keepdims=True))
    return z / np.sum(z, axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    x = _floating(x)
    if x.size == 0 or x.shape[axis] == 0:
        raise DomainError("log_softmax of an empty vector")
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def frame_sum(x: np.ndarray, axis: int) -> np.ndarray:
    """Sum along ``axis`` over sorted terms, so the result ignores input order."""
    return np.sort(x, axis=axis).sum(axis=axis)


def clip_elementwise(g: np.ndarray, limit: float) -> np.ndarray:
    if not limit > 0:
        raise DomainError(f"clip limit must be positive, got {limit}")
    return np.clip(g, -limit, limit)


def dropout_mask(rng: np.random.Generator, shape, rate: float, dtype=np.float64) -> np.ndarray:
    """Inverted-dropout multiplier: 0 with probability ``rate``, else 1/(1-rate)."""
    if rate <= 0.0:
        return np.ones(shape, dtype=dtype)
    keep = rng.random(shape) >= rate
    return (keep / (1.0 - rate)).astype(dtype)


@dataclass
class GradSlot:
    """A parameter value paired with its gradient accumulator."""

    value: np.ndarray
    grad: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape:
            raise DimensionError(f"grad shape {self.grad.shape} != value shape {self.value.shape}")

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: tuple
    n_checked: int
    tol: float
    per_param: dict[str, float]

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status}: max relative error {self.max_rel_error:.3e} (tol {self.tol:.0e}) "
            f"at {self.worst_param}{list(self.worst_index)} over {self.n_checked} scalars"
        )


def finite_difference_check(
    loss_fn: Callable[[Mapping[str, np.ndarray]], tuple[float, Mapping[str, np.ndarray]]],
    params: Mapping[str, np.ndarray],
    eps: float = 1e-5,
    tol: float = 1e-4,
    names=None,
    numeric_loss_fn: Callable[[Mapping[str, np.ndarray]], float] | None = None,
) -> GradCheckReport:
    """Compare analytic gradients against central differences, scalar by scalar.

    ``loss_fn(params)`` must return ``(loss, grads)`` with ``grads`` keyed like
    ``params``. Arrays in ``params`` are perturbed in place and restored. The
    relative error per scalar is ``|ga - gn| / max(|ga|, |gn|, 1e-8)``.

    ``numeric_loss_fn`` optionally evaluates the perturbed losses instead of
    ``loss_fn``, e.g. the same model run in extended precision. Gradients of
    order 1e-8 are otherwise swamped by last-ulp rounding of an f64 loss.
    """
    loss0, grads = loss_fn(params)
    loss1, _ = loss_fn(params)
    if loss0 != loss1:
        raise ContractError(f"loss_fn is not deterministic: {loss0!r} != {loss1!r}")
    if numeric_loss_fn is None:
        def numeric_loss_fn(p):
            return loss_fn(p)[0]
    elif numeric_loss_fn(params) != numeric_loss_fn(params):
        raise ContractError("numeric_loss_fn is not deterministic")

    worst = (0.0, "", ())
    per_param: dict[str, float] = {}
    count = 0
    for name in names if names is not None else params:
        theta = params[name]
        if theta.dtype != np.float64:
            raise ContractError(f"gradient check needs float64, {name} is {theta.dtype}")
        analytic = np.asarray(grads[name])
        if analytic.shape != theta.shape:
            raise DimensionError(f"grad for {name} has shape {analytic.shape}, expected {theta.shape}")
        local = 0.0
        for idx in np.ndindex(theta.shape):
            orig = theta[idx]
            theta[idx] = orig + eps
            lp = numeric_loss_fn(params)
            theta[idx] = orig - eps
            lm = numeric_loss_fn(params)
            theta[idx] = orig
            numeric = float((lp - lm) / (2.0 * eps))
            ga = float(analytic[idx])
            err = abs(ga - numeric) / max(abs(ga), abs(numeric), 1e-8)
            local = max(local, err)
            if count == 0 or err > worst[0]:
                worst = (err, name, idx)
            count += 1
        per_param[name] = local
    return GradCheckReport(worst[0], worst[1], worst[2], count, tol, per_param)
