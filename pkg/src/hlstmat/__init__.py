"""Hierarchical LSTM video captioning with adjusted temporal attention, in numpy."""

from .data import BOS, EOS, PAD, UNK, Dataset, SynthGrammar, Vocabulary, build_vocab, load_dataset, synth_corpus
from .decoder import batch_nll, decode_step, loss_and_grad, sequence_nll
from .evaluation import bleu
from .inference import beam_search, greedy_decode
from .model import ModelConfig, ModelParams, load_checkpoint, save_checkpoint
from .training import TrainConfig, train

__version__ = "0.1.0"
