"""Caption generation: greedy decoding and beam search."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import BOS, EOS, VideoFeatures
from .decoder import _step_forward, encode_video, initial_state
from .model import ModelParams
from .numerics import DomainError

DEFAULT_BEAM = 5
DEFAULT_MAX_LEN = 30


@dataclass
class BeamHypothesis:
    tokens: tuple[int, ...]  # starts with BOS
    log_prob: float
    finished: bool = False
    alphas: list[np.ndarray] = field(default_factory=list)
    betas: list[float] = field(default_factory=list)

    @property
    def words(self) -> list[int]:
        """Generated ids without BOS/EOS framing."""
        return [t for t in self.tokens[1:] if t != EOS]

    @property
    def generated(self) -> tuple[int, ...]:
        """Every emitted id after BOS, EOS included (one per decode step)."""
        return self.tokens[1:]

    def score(self, length_penalty: float = 0.0) -> float:
        if length_penalty == 0.0:
            return self.log_prob
        return self.log_prob / (len(self.generated) ** length_penalty)


def _video_context(video, params: ModelParams):
    frames = video.frames if isinstance(video, VideoFeatures) else np.asarray(video, dtype=float)
    ctx = encode_video(frames[None], params)
    return ctx, initial_state(ctx, params)


def greedy_decode(video, params: ModelParams, max_len: int = DEFAULT_MAX_LEN, trace: bool = False) -> BeamHypothesis:
    """Pick the most probable word at every step (lowest id on ties) until EOS or ``max_len``."""
    if max_len < 1:
        raise DomainError("max_len must be >= 1")
    ctx, state = _video_context(video, params)
    tokens = [BOS]
    total = 0.0
    hyp = BeamHypothesis((BOS,), 0.0)
    for _ in range(max_len):
        logp, state, (alpha, beta), _ = _step_forward(params, np.array([tokens[-1]]), state, ctx)
        k = int(np.argmax(logp[0]))
        total += float(logp[0, k])
        tokens.append(k)
        if trace:
            hyp.alphas.append(alpha[0].copy())
            hyp.betas.append(float(beta[0]))
        if k == EOS:
            break
    hyp.tokens = tuple(tokens)
    hyp.log_prob = total
    hyp.finished = tokens[-1] == EOS
    return hyp


def beam_search(video, params: ModelParams, beam_size: int = DEFAULT_BEAM, max_len: int = DEFAULT_MAX_LEN,
                length_penalty: float = 0.0, trace: bool = False) -> list[BeamHypothesis]:
    """Breadth-limited search over captions ranked by total log-probability.

    Every step expands all live hypotheses over the whole vocabulary and keeps
    the ``beam_size`` best candidates; candidates ending in EOS leave the beam
    for the finished pool. Hypotheses still live after ``max_len`` steps are
    returned unfinished. Equal scores are ordered by token sequence.
    """
    if beam_size < 1:
        raise DomainError("beam_size must be >= 1")
    if max_len < 1:
        raise DomainError("max_len must be >= 1")
    ctx1, state = _video_context(video, params)
    live = [BeamHypothesis((BOS,), 0.0)]
    done: list[BeamHypothesis] = []

    for _ in range(max_len):
        rows = np.zeros(len(live), dtype=np.int64)
        ctx = ctx1.take(rows)
        last = np.array([h.tokens[-1] for h in live])
        logp, new_state, (alpha, beta), _ = _step_forward(params, last, state, ctx)
        totals = np.array([h.log_prob for h in live])[:, None] + logp
        flat = totals.ravel()
        k = min(beam_size, flat.size)
        # Every candidate tied with the k-th best score competes on the token tie-break.
        kth = np.partition(flat, flat.size - k)[flat.size - k]
        cand = np.flatnonzero(flat >= kth)
        V = logp.shape[1]
        ranked = sorted(cand, key=lambda j: (-flat[j], live[j // V].tokens + (j % V,)))[:k]

        next_live, keep_rows = [], []
        for j in ranked:
            i, v = divmod(int(j), V)
            parent = live[i]
            hyp = BeamHypothesis(parent.tokens + (v,), float(flat[j]), v == EOS)
            if trace:
                hyp.alphas = parent.alphas + [alpha[i].copy()]
                hyp.betas = parent.betas + [float(beta[i])]
            if hyp.finished:
                done.append(hyp)
            else:
                next_live.append(hyp)
                keep_rows.append(i)
        if not next_live:
            live = []
            break
        live = next_live
        state = new_state.take(np.array(keep_rows))

    results = done + live
    results.sort(key=lambda h: (-h.score(length_penalty), h.tokens))
    return results


def generation_record(video_id: str, hyp: BeamHypothesis, vocab) -> dict:
    return {"video_id": video_id, "caption": " ".join(vocab.decode(hyp.generated)), "log_prob": hyp.log_prob}


def write_generations_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_generations_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]

