"""Where does the trained decoder look, and when does it look at all?

Trains the same small model as demo 01 (quietly), then prints for each
generated word the gate value beta (share of visual context) and the
attention weights alpha over the 8 frames.

Run from the repository root:  python demos/02_attention_and_gate.py
"""

# %% Train (about 15 s).
import numpy as np

from hlstmat.data import SynthGrammar, build_vocab, synth_corpus
from hlstmat.inference import greedy_decode
from hlstmat.model import ModelParams
from hlstmat.training import TrainConfig, model_config_for, train

grammar = SynthGrammar()
dataset, records = synth_corpus(7, 50, grammar)
vocab = build_vocab([t for _, t in dataset.texts])
params = ModelParams.init(model_config_for(vocab, dataset.d_f, {"d_e": 64, "d_h": 64}), seed=7)
model = train(dataset, dataset, vocab, TrainConfig(batch_size=16, max_epochs=300, seed=7), params).final_params

# %% One video, step by step. Subject frames are 0-2, verb 3-4, object 5-7.
hyp = greedy_decode(dataset.videos["vid0003"], model, trace=True)
words = [vocab.id_to_token[t] for t in hyp.generated]
print(f"{'word':>10} {'beta':>6}  alpha over frames")
for w, a, b in zip(words, hyp.alphas, hyp.betas):
    bar = " ".join(f"{x:.2f}" for x in a)
    print(f"{w:>10} {b:6.3f}  {bar}")

# %% Averaged over the corpus: the gate opens for content words.
by_pos = {k: [] for k in range(6)}
for vid in dataset.videos:
    h = greedy_decode(dataset.videos[vid], model, trace=True)
    for pos, b in enumerate(h.betas[:6]):
        by_pos[pos].append(b)
template = "the S is V the O".split()
for pos, bs in by_pos.items():
    kind = "content" if pos in grammar.VISUAL_POSITIONS else "function"
    print(f"position {pos} ({template[pos]:>3}, {kind:8s}) mean beta {np.mean(bs):.3f}")

# %% Closing the gate by hand removes all visual evidence.
from hlstmat.decoder import decode_step, encode_video, initial_state  # noqa: E402

video = dataset.videos["vid0003"]
ctx = encode_video(video.frames, model)
state = initial_state(ctx, model)
tok, out = 1, []
for _ in range(8):
    logp, state, _ = decode_step(tok, state, ctx, model, beta_override=0.0)
    tok = int(np.argmax(logp))
    if tok == 2:
        break
    out.append(vocab.id_to_token[tok])
print("gate forced shut:", " ".join(out))
print("gate learned:    ", " ".join(vocab.decode(hyp.generated)))
