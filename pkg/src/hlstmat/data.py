"""Frame features, captions, vocabulary and the synthetic template corpus."""

from __future__ import annotations

import json
import os
import re
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .numerics import DimensionError, DomainError

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")

HLSF_MAGIC = b"HLSF"
HLSF_VERSION = 1
_HEADER = struct.Struct("<4sIII")


class FormatError(ValueError):
    """A feature file or caption file does not match its declared layout."""


# Same pattern as NLTK's wordpunct_tokenize: alphanumeric runs or punctuation runs.
_WORDPUNCT = re.compile(r"\w+|[^\w\s]+")
_WORD_CHAR = re.compile(r"\w")


def tokenize(sentence: str, mode: str = "msvd") -> list[str]:
    """Split a caption into word tokens.

    ``msvd`` lowercases, applies a word/punctuation tokenizer and drops tokens
    made only of punctuation. ``msrvtt`` captions come pre-tokenized, so they
    are only split on runs of spaces.
    """
    if mode == "msvd":
        return [t for t in _WORDPUNCT.findall(sentence.lower()) if _WORD_CHAR.search(t)]
    if mode == "msrvtt":
        return sentence.split()
    raise DomainError(f"unknown tokenizer mode {mode!r}")


class Vocabulary:
    def __init__(self, words: Sequence[str]):
        self.id_to_token: list[str] = list(RESERVED) + list(words)
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id and self.token_to_id[token] > UNK

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.id_to_token == other.id_to_token

    def id(self, token: str) -> int:
        i = self.token_to_id.get(token, UNK)
        return i if i > UNK else UNK

    def encode(self, tokens: Sequence[str] | str, mode: str = "msvd") -> list[int]:
        """Map tokens to ids framed by BOS ... EOS; unknown words become UNK."""
        if isinstance(tokens, str):
            tokens = tokenize(tokens, mode)
        return [BOS] + [self.id(t) for t in tokens] + [EOS]

    def decode(self, ids: Iterable[int]) -> list[str]:
        """Surface tokens for ``ids``; reading stops at EOS, BOS/PAD are dropped."""
        out = []
        for i in ids:
            i = int(i)
            if i == EOS:
                break
            if i in (BOS, PAD):
                continue
            out.append(self.id_to_token[i])
        return out

    @property
    def words(self) -> list[str]:
        return self.id_to_token[len(RESERVED):]


def build_vocab(corpus: Iterable[Sequence[str] | str], min_count: int = 1, mode: str = "msvd") -> Vocabulary:
    """Vocabulary over ``corpus`` (token lists, or raw strings tokenized with ``mode``).

    Ids follow descending frequency, ties broken lexicographically, so the
    result does not depend on corpus order.
    """
    counts: Counter[str] = Counter()
    n = 0
    for sent in corpus:
        toks = tokenize(sent, mode) if isinstance(sent, str) else sent
        counts.update(toks)
        n += 1
    if n == 0:
        raise DomainError("cannot build a vocabulary from an empty corpus")
    kept = [w for w, c in counts.items() if c >= min_count and w not in RESERVED]
    kept.sort(key=lambda w: (-counts[w], w))
    return Vocabulary(kept)


@dataclass
class VideoFeatures:
    id: str
    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise DimensionError(f"video {self.id}: frames must be n x d_f with n >= 1, got {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise FormatError(f"video {self.id}: non-finite feature values")

    @property
    def n(self) -> int:
        return self.frames.shape[0]

    @property
    def d_f(self) -> int:
        return self.frames.shape[1]


@dataclass
class Caption:
    video_id: str
    tokens: list[int]

    def __post_init__(self):
        if len(self.tokens) < 3 or self.tokens[0] != BOS or self.tokens[-1] != EOS:
            raise DomainError(f"caption for {self.video_id} must be BOS + >=1 word + EOS, got {self.tokens}")


# --- HLSF feature files -----------------------------------------------------


def encode_hlsf(frames: np.ndarray) -> bytes:
    frames = np.asarray(frames)
    if frames.ndim != 2:
        raise DimensionError(f"HLSF payload must be 2-D, got {frames.shape}")
    n, d_f = frames.shape
    payload = np.ascontiguousarray(frames, dtype="<f4").tobytes()
    return _HEADER.pack(HLSF_MAGIC, HLSF_VERSION, n, d_f) + payload


def decode_hlsf(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise FormatError(f"truncated header at byte offset {len(buf)} (need {_HEADER.size} bytes)")
    magic, version, n, d_f = _HEADER.unpack_from(buf, 0)
    if magic != HLSF_MAGIC:
        raise FormatError(f"bad magic {magic!r} at byte offset 0")
    if version != HLSF_VERSION:
        raise FormatError(f"unsupported version {version} at byte offset 4")
    if n < 1 or d_f < 1:
        raise FormatError(f"empty feature matrix n={n}, d_f={d_f} at byte offset 8")
    expected = _HEADER.size + 4 * n * d_f
    if len(buf) != expected:
        kind = "truncated payload" if len(buf) < expected else "trailing bytes"
        raise FormatError(f"{kind}: n*d_f={n * d_f} needs {expected} bytes, file ends at byte offset {len(buf)}")
    return np.frombuffer(buf, dtype="<f4", offset=_HEADER.size).reshape(n, d_f).astype(np.float64)


def write_features(path: str | os.PathLike, frames: np.ndarray) -> None:
    Path(path).write_bytes(encode_hlsf(frames))


def load_features(path: str | os.PathLike, video_id: str | None = None) -> VideoFeatures:
    path = Path(path)
    try:
        frames = decode_hlsf(path.read_bytes())
    except FormatError as e:
        raise FormatError(f"{path}: {e}") from None
    return VideoFeatures(video_id if video_id is not None else path.stem, frames)


# --- captions and manifests -------------------------------------------------


def read_captions_jsonl(path: str | os.PathLike) -> list[tuple[str, str]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append((str(rec["video_id"]), str(rec["caption"])))
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise FormatError(f"{path}:{lineno}: bad caption record ({e})") from None
    return out


def write_captions_jsonl(path: str | os.PathLike, records: Iterable[tuple[str, str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for vid, text in records:
            fh.write(json.dumps({"video_id": vid, "caption": text}) + "\n")


@dataclass
class Dataset:
    """Videos plus their (possibly several) captions, tokenized as strings."""

    videos: dict[str, VideoFeatures]
    texts: list[tuple[str, list[str]]]
    tokenizer: str = "msvd"

    def __post_init__(self):
        dims = {v.d_f for v in self.videos.values()}
        if len(dims) > 1:
            raise DimensionError(f"videos disagree on feature dimension: {sorted(dims)}")
        missing = sorted({vid for vid, _ in self.texts} - set(self.videos))
        if missing:
            raise FormatError(f"captions reference videos without features: {missing}")

    @property
    def d_f(self) -> int:
        return next(iter(self.videos.values())).d_f

    def references(self) -> dict[str, list[list[str]]]:
        refs: dict[str, list[list[str]]] = {}
        for vid, toks in self.texts:
            refs.setdefault(vid, []).append(toks)
        return refs

    def pairs(self, vocab: Vocabulary) -> list[tuple[VideoFeatures, Caption]]:
        """Independent (video, caption) training pairs; empty captions are skipped."""
        return [(self.videos[vid], Caption(vid, vocab.encode(toks))) for vid, toks in self.texts if toks]


def load_manifest(path: str | os.PathLike) -> dict:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        man = json.load(fh)
    for key in ("features_dir", "captions", "tokenizer"):
        if key not in man:
            raise FormatError(f"{path}: manifest lacks {key!r}")
    if man["tokenizer"] not in ("msvd", "msrvtt"):
        raise FormatError(f"{path}: unknown tokenizer {man['tokenizer']!r}")
    base = path.parent
    man["features_dir"] = str(base / man["features_dir"])
    man["captions"] = str(base / man["captions"])
    return man


def load_dataset(manifest_path: str | os.PathLike) -> Dataset:
    man = load_manifest(manifest_path)
    feat_dir = Path(man["features_dir"])
    records = read_captions_jsonl(man["captions"])
    videos = {}
    for vid, _ in records:
        if vid not in videos:
            f = feat_dir / f"{vid}.hlsf"
            if not f.exists():
                raise FileNotFoundError(f"no feature file for video {vid!r}: {f}")
            videos[vid] = load_features(f, vid)
    texts = [(vid, tokenize(text, man["tokenizer"])) for vid, text in records]
    return Dataset(videos, texts, man["tokenizer"])


def save_dataset(out_dir: str | os.PathLike, dataset: Dataset, captions: Sequence[tuple[str, str]]) -> Path:
    """Write HLSF files, captions.jsonl and manifest.json; returns the manifest path."""
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    for vid in sorted(dataset.videos):
        write_features(out / "features" / f"{vid}.hlsf", dataset.videos[vid].frames)
    write_captions_jsonl(out / "captions.jsonl", captions)
    manifest = {"features_dir": "features", "captions": "captions.jsonl", "tokenizer": dataset.tokenizer}
    mpath = out / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return mpath


# --- synthetic corpus -------------------------------------------------------

_DEFAULT_SUBJECTS = ("man", "woman", "dog", "cat", "child")
_DEFAULT_VERBS = ("riding", "eating", "cutting", "throwing", "holding")
_DEFAULT_OBJECTS = ("bike", "apple", "ball", "paper", "guitar")


@dataclass(frozen=True)
class SynthGrammar:
    """Template grammar "the <subject> is <verb> the <object>".

    Each content word owns a fixed signature vector (drawn from
    ``signature_seed``, orthonormal while the word count fits in ``d_f``).
    Frames in the word's slot span carry that signature plus Gaussian noise.
    """

    subjects: tuple[str, ...] = _DEFAULT_SUBJECTS
    verbs: tuple[str, ...] = _DEFAULT_VERBS
    objects: tuple[str, ...] = _DEFAULT_OBJECTS
    n_frames: int = 8
    d_f: int = 16
    noise: float = 0.1
    signature_seed: int = 0
    spans: tuple[tuple[int, int], ...] = ((0, 3), (3, 5), (5, 8))

    # 0-based word positions in "the S is V the O"
    VISUAL_POSITIONS = (1, 3, 5)
    NONVISUAL_POSITIONS = (0, 2, 4)

    def content_words(self) -> list[str]:
        return list(self.subjects) + list(self.verbs) + list(self.objects)

    def signatures(self) -> dict[str, np.ndarray]:
        words = self.content_words()
        rng = np.random.default_rng(self.signature_seed)
        if len(words) <= self.d_f:
            q, _ = np.linalg.qr(rng.normal(size=(self.d_f, self.d_f)))
            rows = q.T[: len(words)]
        else:
            rows = rng.normal(size=(len(words), self.d_f))
            rows /= np.linalg.norm(rows, axis=1, keepdims=True)
        return {w: rows[i].copy() for i, w in enumerate(words)}

    def sentence(self, subject: str, verb: str, obj: str) -> str:
        return f"the {subject} is {verb} the {obj}"


def synth_corpus(seed: int, num_videos: int, grammar: SynthGrammar | None = None) -> tuple[Dataset, list[tuple[str, str]]]:
    """Deterministic synthetic dataset plus its raw caption records."""
    if num_videos < 1:
        raise DomainError("num_videos must be >= 1")
    grammar = grammar or SynthGrammar()
    sigs = grammar.signatures()
    rng = np.random.default_rng(seed)
    videos: dict[str, VideoFeatures] = {}
    records = []
    slots = (grammar.subjects, grammar.verbs, grammar.objects)
    for k in range(num_videos):
        vid = f"vid{k:04d}"
        triple = [slot[rng.integers(len(slot))] for slot in slots]
        frames = grammar.noise * rng.normal(size=(grammar.n_frames, grammar.d_f))
        for word, (lo, hi) in zip(triple, grammar.spans):
            frames[lo:hi] += sigs[word]
        # Stored precision is f32; round now so in-memory and on-disk data agree.
        videos[vid] = VideoFeatures(vid, frames.astype(np.float32).astype(np.float64))
        records.append((vid, grammar.sentence(*triple)))
    texts = [(vid, tokenize(text, "msvd")) for vid, text in records]
    return Dataset(videos, texts, "msvd"), records
