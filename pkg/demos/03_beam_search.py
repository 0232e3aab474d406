"""Beam search against greedy decoding and exhaustive enumeration.

Uses small random models, so no training is needed.
Run from the repository root:  python demos/03_beam_search.py
"""

# %% A random 5-word model and one 3-frame video.
import itertools

import numpy as np

from hlstmat.decoder import decode_step, encode_video, initial_state
from hlstmat.inference import beam_search, greedy_decode
from hlstmat.model import ModelConfig, ModelParams

rng = np.random.default_rng(1)
params = ModelParams.zeros(ModelConfig(vocab_size=5, d_f=3, d_e=4, d_h=4))
for name in params:
    params[name][...] = rng.normal(scale=1.5, size=params[name].shape)
video = rng.normal(size=(3, 3))


# %% Brute force: score every token sequence of length 4 (EOS ends early).
def score(tokens):
    ctx = encode_video(video, params)
    state, total = initial_state(ctx, params), 0.0
    for prev, nxt in zip(tokens[:-1], tokens[1:]):
        logp, state, _ = decode_step(prev, state, ctx, params)
        total += logp[nxt]
    return total


seen = {}
for seq in itertools.product(range(5), repeat=4):
    cut = seq[: seq.index(2) + 1] if 2 in seq else seq  # stop at EOS (id 2)
    seen[(1,) + cut] = score((1,) + cut)
best = max(seen, key=seen.get)
print(f"{len(seen)} distinct captions, best {best} log-prob {seen[best]:.4f}")

# %% Beam widths from greedy up to the whole space.
for k in (1, 2, 3, 5, 25, 625):
    top = beam_search(video, params, beam_size=k, max_len=4)[0]
    print(f"beam {k:3d}: {top.tokens}  {top.log_prob:.4f}")
print("greedy   :", greedy_decode(video, params, max_len=4).tokens)

# %% Wider is not always better. This model gives the greedy path a low
# second step that pays off later; a beam of two trades it away.
rng = np.random.default_rng(99)
p = ModelParams.zeros(ModelConfig(vocab_size=6, d_f=3, d_e=4, d_h=4))
for name in p:
    p[name][...] = rng.normal(scale=1.5, size=p[name].shape)
v = rng.normal(size=(3, 3))
for k in (1, 2, 3, 4):
    top = beam_search(v, p, beam_size=k, max_len=5)[0]
    print(f"beam {k}: {top.tokens}  {top.log_prob:.4f}")
