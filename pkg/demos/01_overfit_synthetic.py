"""Train the captioner on the synthetic template corpus and watch it memorise.

Run from the repository root:  python demos/01_overfit_synthetic.py
Takes roughly a quarter of a minute on a laptop CPU.
"""

# %% The corpus: 50 videos, 8 frames of 16-d features each.
import numpy as np

from hlstmat.data import build_vocab, synth_corpus
from hlstmat.inference import greedy_decode
from hlstmat.model import ModelParams
from hlstmat.training import TrainConfig, greedy_bleu4, model_config_for, train

dataset, records = synth_corpus(seed=7, num_videos=50)
for vid, text in records[:3]:
    print(vid, "->", text)

# Every caption follows "the <subject> is <verb> the <object>". Each content
# word stamps its signature vector onto a fixed span of frames.
vocab = build_vocab([toks for _, toks in dataset.texts])
print(len(vocab), "ids:", vocab.id_to_token)

# %% A small model: 64-d embeddings and hidden states.
cfg = model_config_for(vocab, dataset.d_f, {"d_e": 64, "d_h": 64})
params = ModelParams.init(cfg, seed=7)
print(sum(a.size for a in params.values()), "parameters")

# %% Before training the decoder babbles.
video = dataset.videos["vid0000"]
print("untrained:", " ".join(vocab.decode(greedy_decode(video, params).generated)))

# %% Adadelta, clip 10, dropout 0.5, validation on the training set itself.
config = TrainConfig(batch_size=16, max_epochs=300, dropout=0.5, seed=7)


def progress(rec):
    if rec.epoch % 20 == 0 or rec.is_best and rec.val_metric == 1.0:
        print(f"epoch {rec.epoch:3d}  train loss {rec.train_loss:.4f}  B@4 {rec.val_metric:.4f}")


result = train(dataset, dataset, vocab, config, params, on_epoch=progress)
print(len(result.history), "epochs, stopped early:", result.stopped_early)

# %% The trained model recites the training captions.
final = result.final_params
print("B@4 on training videos:", round(greedy_bleu4(dataset, vocab, final), 4))
for vid, text in records[:5]:
    hyp = greedy_decode(dataset.videos[vid], final)
    print(f"{vid}  truth: {text:35s} model: {' '.join(vocab.decode(hyp.generated))}")

# %% Loss curve as text (first, every 25th, last epoch).
losses = np.array([r.train_loss for r in result.history])
for e in [0, *range(24, len(losses), 25), len(losses) - 1]:
    print(f"{e + 1:4d} {losses[e]:.4f} " + "#" * int(40 * losses[e] / losses[0]))
