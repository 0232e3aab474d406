"""Adadelta training loop with element-wise clipping and early stopping."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Mapping

import numpy as np

from .data import Dataset, Vocabulary
from .decoder import batch_nll, loss_and_grad
from .evaluation import bleu_from_maps
from .inference import DEFAULT_MAX_LEN, greedy_decode
from .model import ModelConfig, ModelParams
from .numerics import DomainError, NumericError, clip_elementwise

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 64
    max_epochs: int = 500
    patience: int = 20
    clip: float = 10.0
    dropout: float = 0.5
    seed: int = 0
    rho: float = 0.95
    eps: float = 1e-6
    val_metric: str = "bleu4"  # or "loss"
    max_len: int = DEFAULT_MAX_LEN

    def __post_init__(self):
        if self.batch_size < 1:
            raise DomainError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise DomainError("max_epochs must be >= 1")
        if self.patience < 0:
            raise DomainError("patience must be >= 0")
        if not self.clip > 0:
            raise DomainError("clip must be > 0")
        if not 0.0 <= self.dropout < 1.0:
            raise DomainError("dropout must lie in [0, 1)")
        if self.val_metric not in ("bleu4", "loss"):
            raise DomainError(f"val_metric must be 'bleu4' or 'loss', got {self.val_metric!r}")


MODEL_KEYS = ("d_e", "d_h", "d_a", "d_p", "literal_eq10", "top_init", "output_hidden")


def load_config(path) -> tuple[TrainConfig, dict]:
    """Read a JSON run config; returns the training config and model-dimension overrides."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(raw) - known - set(MODEL_KEYS)
    if unknown:
        raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
    tc = TrainConfig(**{k: v for k, v in raw.items() if k in known})
    return tc, {k: raw[k] for k in MODEL_KEYS if k in raw}


def model_config_for(vocab: Vocabulary, d_f: int, overrides: Mapping) -> ModelConfig:
    return ModelConfig(vocab_size=len(vocab), d_f=d_f, **overrides)


@dataclass
class AdadeltaState:
    E_g2: dict[str, np.ndarray]
    E_dx2: dict[str, np.ndarray]
    rho: float = 0.95
    eps: float = 1e-6

    @classmethod
    def for_params(cls, params: Mapping[str, np.ndarray], rho: float = 0.95, eps: float = 1e-6) -> "AdadeltaState":
        return cls({k: np.zeros_like(v) for k, v in params.items()},
                   {k: np.zeros_like(v) for k, v in params.items()}, rho, eps)


def adadelta_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdadeltaState) -> None:
    """In-place update of ``params`` and the running averages in ``state``."""
    rho, eps = state.rho, state.eps
    for name, theta in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name}")
        Eg = state.E_g2[name]
        Ex = state.E_dx2[name]
        Eg *= rho
        Eg += (1.0 - rho) * g * g
        dx = -(np.sqrt(Ex + eps) / np.sqrt(Eg + eps)) * g
        Ex *= rho
        Ex += (1.0 - rho) * dx * dx
        theta += dx


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_metric: float
    is_best: bool


@dataclass
class TrainResult:
    best_params: ModelParams
    final_params: ModelParams
    history: list[EpochRecord] = field(default_factory=list)
    stopped_early: bool = False

    @property
    def best_epoch(self) -> int:
        return max(r.epoch for r in self.history if r.is_best)


def greedy_bleu4(dataset: Dataset, vocab: Vocabulary, params: ModelParams, max_len: int = DEFAULT_MAX_LEN) -> float:
    refs = dataset.references()
    gen = {vid: vocab.decode(greedy_decode(dataset.videos[vid], params, max_len).generated) for vid in sorted(refs)}
    return bleu_from_maps(gen, refs)["B@4"]


def train(train_set: Dataset, val_set: Dataset, vocab: Vocabulary, config: TrainConfig, params: ModelParams,
          on_epoch: Callable[[EpochRecord], None] | None = None) -> TrainResult:
    """Fit ``params`` (updated in place) and return the best and final weights.

    Each epoch shuffles the training pairs with a generator seeded by
    ``(seed, epoch)``, steps Adadelta on clipped mean-per-token gradients, then
    scores the validation set (greedy B@4, or eval-mode loss). Training stops
    after ``max_epochs`` or at the first epoch that makes ``patience + 1``
    consecutive epochs without beating the best score.
    """
    pairs = train_set.pairs(vocab)
    val_pairs = val_set.pairs(vocab)
    if not pairs or not val_pairs:
        raise DomainError("training and validation sets must be non-empty")
    opt = AdadeltaState.for_params(params, config.rho, config.eps)
    higher_better = config.val_metric == "bleu4"
    best_metric = -math.inf if higher_better else math.inf
    best = params.copy()
    history: list[EpochRecord] = []
    wait = 0
    stopped = False

    for epoch in range(1, config.max_epochs + 1):
        rng = np.random.default_rng([config.seed, epoch])
        order = rng.permutation(len(pairs))
        loss_sum = 0.0
        n_tok = 0
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            batch = [pairs[i] for i in order[start:start + config.batch_size]]
            loss, grads = loss_and_grad(params, batch, train_mode=True, rng=rng, dropout=config.dropout)
            if not math.isfinite(loss):
                raise NumericError(f"training diverged at epoch {epoch}, batch {b}")
            tokens = sum(len(c.tokens) - 1 for _, c in batch)
            loss_sum += float(loss) * tokens
            n_tok += tokens
            grads = {k: clip_elementwise(g, config.clip) for k, g in grads.items()}
            adadelta_step(params, grads, opt)

        if config.val_metric == "bleu4":
            metric = greedy_bleu4(val_set, vocab, params, config.max_len)
        else:
            metric = float(batch_nll(val_pairs, params))
        improved = metric > best_metric if higher_better else metric < best_metric
        if improved:
            best_metric = metric
            best = params.copy()
            wait = 0
        else:
            wait += 1
        rec = EpochRecord(epoch, loss_sum / n_tok, metric, improved)
        history.append(rec)
        log.info("epoch %d train_loss %.5f val_%s %.5f%s", epoch, rec.train_loss, config.val_metric, metric,
                 " *" if improved else "")
        if on_epoch is not None:
            on_epoch(rec)
        if not improved and wait > config.patience:
            stopped = True
            break
    return TrainResult(best, params, history, stopped)


def write_history_csv(path, history: list[EpochRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_metric", "is_best"])
        for r in history:
            w.writerow([r.epoch, repr(float(r.train_loss)), repr(float(r.val_metric)), int(r.is_best)])


def read_history_csv(path) -> list[EpochRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [EpochRecord(int(r["epoch"]), float(r["train_loss"]), float(r["val_metric"]), r["is_best"] == "1")
                for r in csv.DictReader(fh)]


def config_dict(config: TrainConfig, model_overrides: Mapping | None = None) -> dict:
    d = asdict(config)
    d.update(model_overrides or {})
    return d

