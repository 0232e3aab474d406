"""Shared builders for small random models and inputs."""

import numpy as np

from hlstmat.data import BOS, EOS, Caption, VideoFeatures
from hlstmat.model import ModelConfig, ModelParams

TINY = dict(vocab_size=12, d_f=5, d_e=8, d_h=8, d_a=8, d_p=8)


def random_model(seed, scale=0.5, **overrides):
    """Tiny model with every parameter drawn N(0, scale^2), biases included."""
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(**{**TINY, **overrides})
    p = ModelParams.zeros(cfg)
    for name in p:
        p[name][...] = rng.normal(scale=scale, size=p[name].shape)
    return p


def random_video(seed, n=4, d_f=5, vid="v"):
    rng = np.random.default_rng(seed + 10_000)
    return VideoFeatures(vid, rng.normal(size=(n, d_f)))


def random_caption(seed, n_words=4, vocab_size=12, vid="v"):
    rng = np.random.default_rng(seed + 20_000)
    words = rng.integers(EOS + 2, vocab_size, size=n_words).tolist()
    return Caption(vid, [BOS] + words + [EOS])


def enumerate_captions(video, params, max_len):
    """Every caption reachable in ``max_len`` steps with its total log-prob.

    A caption ends at EOS or is cut off after ``max_len`` emitted tokens.
    Depth-first, one decode step per prefix; the exhaustive oracle for search.
    """
    from hlstmat.decoder import decode_step, encode_video, initial_state

    ctx = encode_video(video.frames, params)
    out = []

    def walk(tokens, state, total):
        logp, state, _ = decode_step(tokens[-1], state, ctx, params)
        for v in range(params.config.vocab_size):
            seq, score = tokens + (v,), total + float(logp[v])
            if v == EOS or len(seq) - 1 == max_len:
                out.append((seq, score))
            else:
                walk(seq, state, score)

    walk((BOS,), initial_state(ctx, params), 0.0)
    return out


def best_caption(video, params, max_len):
    return min(enumerate_captions(video, params, max_len), key=lambda r: (-r[1], r[0]))
