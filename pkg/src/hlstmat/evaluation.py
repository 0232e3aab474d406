"""Corpus-level BLEU@1..4 with multiple references."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .numerics import DomainError


@dataclass
class EvalPair:
    candidate: list[str]
    references: list[list[str]]

    def __post_init__(self):
        if not self.references:
            raise DomainError("an evaluation pair needs at least one reference")


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def closest_ref_length(c: int, refs: Sequence[Sequence[str]]) -> int:
    # Ties go to the shorter reference.
    return min((len(r) for r in refs), key=lambda r: (abs(r - c), r))


@dataclass
class BleuStats:
    matches: list[int]
    totals: list[int]
    cand_len: int
    ref_len: int

    def precisions(self, smooth: bool = False) -> list[float]:
        out = []
        for k, (m, t) in enumerate(zip(self.matches, self.totals)):
            if smooth and k > 0:
                out.append((m + 1) / (t + 1))
            else:
                out.append(m / t if t else 0.0)
        return out

    @property
    def brevity_penalty(self) -> float:
        c, r = self.cand_len, self.ref_len
        if c == 0:
            return 0.0
        return 1.0 if c >= r else math.exp(1.0 - r / c)


def corpus_stats(pairs: Sequence[EvalPair], max_n: int = 4) -> BleuStats:
    matches = [0] * max_n
    totals = [0] * max_n
    c_len = r_len = 0
    for pair in pairs:
        cand = pair.candidate
        c_len += len(cand)
        r_len += closest_ref_length(len(cand), pair.references)
        for n in range(1, max_n + 1):
            counts = ngrams(cand, n)
            max_ref: Counter = Counter()
            for ref in pair.references:
                max_ref |= ngrams(ref, n)
            matches[n - 1] += sum(min(c, max_ref[g]) for g, c in counts.items())
            totals[n - 1] += max(len(cand) - n + 1, 0)
    return BleuStats(matches, totals, c_len, r_len)


def bleu(pairs: Sequence[EvalPair], max_n: int = 4, smooth: bool = False) -> dict[str, float]:
    """``{"B@1": ..., "B@max_n": ...}`` from pooled corpus counts.

    ``B@n = BP * exp(mean_{k<=n} log p_k)``, and 0 as soon as any ``p_k`` is 0.
    ``smooth`` adds one to numerator and denominator for n >= 2 (for tiny
    diagnostic corpora only).
    """
    if not 1 <= max_n <= 4:
        raise DomainError(f"max_n must be in 1..4, got {max_n}")
    if not pairs:
        raise DomainError("BLEU needs at least one candidate")
    stats = corpus_stats(pairs, max_n)
    p = stats.precisions(smooth)
    bp = stats.brevity_penalty
    scores = {}
    for n in range(1, max_n + 1):
        if min(p[:n]) <= 0.0:
            scores[f"B@{n}"] = 0.0
        else:
            scores[f"B@{n}"] = bp * math.exp(sum(math.log(x) for x in p[:n]) / n)
    return scores


def bleu_from_maps(generated: dict[str, list[str]], references: dict[str, list[list[str]]], max_n: int = 4,
                   smooth: bool = False) -> dict[str, float]:
    """BLEU for ``video_id -> tokens`` candidates against ``video_id -> reference token lists``."""
    missing = sorted(set(generated) - set(references))
    if missing:
        raise KeyError(f"no references for video ids: {', '.join(missing)}")
    pairs = [EvalPair(generated[v], references[v]) for v in sorted(generated)]
    return bleu(pairs, max_n, smooth)
