import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hlstmat.evaluation import EvalPair, bleu, bleu_from_maps, closest_ref_length, corpus_stats, ngrams
from hlstmat.numerics import DomainError

TWO_PAIRS = [
    EvalPair("a b c d".split(), ["a b c e".split()]),
    EvalPair("a b".split(), ["a b d".split()]),
]


def two_pair_oracle():
    # Pooled counts: unigrams 5/6, bigrams 3/4, trigrams 1/2, 4-grams 0/1; c = 6, r = 7.
    bp = math.exp(1 - 7 / 6)
    return {
        "B@1": bp * 5 / 6,
        "B@2": bp * (5 / 6 * 3 / 4) ** (1 / 2),
        "B@3": bp * (5 / 6 * 3 / 4 * 1 / 2) ** (1 / 3),
        "B@4": 0.0,
    }


def test_identity_scores_exactly_one():
    pairs = [EvalPair("a man is riding a bike".split(), ["a man is riding a bike".split()])]
    assert bleu(pairs) == {"B@1": 1.0, "B@2": 1.0, "B@3": 1.0, "B@4": 1.0}


def test_clipped_unigram_precision():
    pairs = [EvalPair("the the the the".split(), ["the cat".split()])]
    st_ = corpus_stats(pairs, 1)
    assert (st_.matches[0], st_.totals[0]) == (1, 4)
    assert bleu(pairs, max_n=1)["B@1"] == pytest.approx(0.25, abs=1e-12)
    assert bleu(pairs)["B@2"] == 0.0


def test_pooled_two_pair_corpus():
    got = bleu(TWO_PAIRS)
    for k, v in two_pair_oracle().items():
        assert got[k] == pytest.approx(v, abs=1e-12)
    per_sentence = sum(bleu([p], max_n=2)["B@2"] for p in TWO_PAIRS) / 2
    assert abs(got["B@2"] - per_sentence) > 1e-3


def test_closest_reference_length_ties_go_short():
    assert closest_ref_length(5, [list("abcd"), list("abcdef")]) == 4
    assert closest_ref_length(5, [list("abcdefg"), list("ab")]) == 7


def test_brevity_penalty_uses_closest_reference():
    pairs = [EvalPair("a b".split(), ["a b c d".split(), "a b x".split()])]
    assert bleu(pairs, max_n=1)["B@1"] == pytest.approx(math.exp(1 - 3 / 2), abs=1e-15)


def test_smoothing_only_for_higher_orders():
    pairs = [EvalPair("the the the the".split(), ["the cat".split()])]
    s = bleu(pairs, max_n=2, smooth=True)
    assert s["B@1"] == pytest.approx(0.25)
    assert s["B@2"] == pytest.approx(math.sqrt(0.25 * (0 + 1) / (3 + 1)))


def test_errors():
    with pytest.raises(DomainError):
        bleu([])
    with pytest.raises(DomainError):
        bleu(TWO_PAIRS, max_n=5)
    with pytest.raises(DomainError):
        EvalPair(["a"], [])
    with pytest.raises(KeyError, match="v2, v3"):
        bleu_from_maps({"v1": ["a"], "v2": ["b"], "v3": ["c"]}, {"v1": [["a"]]})


def test_ngrams():
    assert ngrams("a b a b".split(), 2) == {("a", "b"): 2, ("b", "a"): 1}
    assert not ngrams(["a"], 2)


sentence = st.lists(st.sampled_from("a b c d e".split()), min_size=1, max_size=7)
corpus = st.lists(st.tuples(sentence, st.lists(sentence, min_size=1, max_size=3)), min_size=1, max_size=5)


@given(corpus, st.randoms(use_true_random=False))
def test_invariant_under_reordering(data, rnd):
    pairs = [EvalPair(c, refs) for c, refs in data]
    shuffled = [EvalPair(c, rnd.sample(refs, len(refs))) for c, refs in data]
    rnd.shuffle(shuffled)
    assert bleu(shuffled) == bleu(pairs)


@given(corpus)
def test_scores_in_unit_interval(data):
    for v in bleu([EvalPair(c, refs) for c, refs in data]).values():
        assert 0.0 <= v <= 1.0


@pytest.mark.parametrize("cand, ref", [
    ("a man is riding a red bike", "a man is riding a blue bike"),
    ("the cat sat on the mat today", "the cat sat on a mat today"),
    ("x y z w v u", "x y z w q u"),
])
def test_monotone_in_order_when_precisions_positive(cand, ref):
    pairs = [EvalPair(cand.split(), [ref.split()])]
    st_ = corpus_stats(pairs)
    assert all(m > 0 for m in st_.matches)
    s = bleu(pairs)
    assert s["B@1"] >= s["B@2"] >= s["B@3"] >= s["B@4"] > 0
