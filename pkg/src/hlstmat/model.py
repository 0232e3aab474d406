"""Model configuration, the named parameter set and checkpoint files."""

from __future__ import annotations

import json
import os
from collections.abc import Mapping
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .attention import AttentionWeights
from .data import FormatError
from .numerics import DimensionError
from .recurrent import LstmWeights


@dataclass
class ModelConfig:
    vocab_size: int
    d_f: int
    d_e: int = 512
    d_h: int = 512
    d_a: int | None = None  # defaults to d_h
    d_p: int | None = None  # defaults to d_h
    literal_eq10: bool = False  # scale the attention context by 1/n
    top_init: str = "zero"  # "zero" or "meanpool"
    output_hidden: str = "bottom"  # hidden state fed to the output MLP: "bottom" or "top"

    def __post_init__(self):
        if self.d_a is None:
            self.d_a = self.d_h
        if self.d_p is None:
            self.d_p = self.d_h
        if self.top_init not in ("zero", "meanpool"):
            raise ValueError(f"top_init must be 'zero' or 'meanpool', got {self.top_init!r}")
        if self.output_hidden not in ("bottom", "top"):
            raise ValueError(f"output_hidden must be 'bottom' or 'top', got {self.output_hidden!r}")
        for name in ("vocab_size", "d_f", "d_e", "d_h", "d_a", "d_p"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def shapes(self) -> dict[str, tuple[int, ...]]:
        V, e, h, a, p, f = self.vocab_size, self.d_e, self.d_h, self.d_a, self.d_p, self.d_f
        return {
            "embedding": (V, e),
            "bottom.W": (4 * h, e),
            "bottom.U": (4 * h, h),
            "bottom.b": (4 * h,),
            "top.W": (4 * h, h),
            "top.U": (4 * h, h),
            "top.b": (4 * h,),
            "attn.W_a": (a, h),
            "attn.U_a": (a, h),
            "attn.b_a": (a,),
            "attn.w": (a,),
            "gate.W_s": (1, h),
            "feat_proj.W_v": (h, f),
            "init.W_ih": (h, f),
            "init.W_ic": (h, f),
            "out.W_p": (p, 2 * h),
            "out.b_p": (p,),
            "out.U_p": (V, p),
            "out.d": (V,),
        }


_BIASES = {"bottom.b", "top.b", "attn.b_a", "out.b_p", "out.d"}


class ModelParams(Mapping):
    """Ordered name -> array mapping with typed views for each layer."""

    def __init__(self, config: ModelConfig, arrays: dict[str, np.ndarray]):
        self.config = config
        shapes = config.shapes()
        if list(arrays) != list(shapes):
            raise DimensionError(f"parameter names {list(arrays)} do not match {list(shapes)}")
        for name, shape in shapes.items():
            if arrays[name].shape != shape:
                raise DimensionError(f"{name}: expected shape {shape}, got {arrays[name].shape}")
        self.arrays = arrays

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __iter__(self):
        return iter(self.arrays)

    def __len__(self) -> int:
        return len(self.arrays)

    @classmethod
    def zeros(cls, config: ModelConfig) -> "ModelParams":
        return cls(config, {k: np.zeros(s) for k, s in config.shapes().items()})

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0) -> "ModelParams":
        """Glorot-uniform matrices, zero biases, all drawn from one seeded generator."""
        rng = np.random.default_rng(seed)
        arrays = {}
        for name, shape in config.shapes().items():
            if name in _BIASES:
                arrays[name] = np.zeros(shape)
                continue
            fan_out, fan_in = shape if len(shape) == 2 else (1, shape[0])
            if name.endswith((".W", ".U")):
                fan_out //= 4  # four stacked gates, each its own matrix
            a = np.sqrt(6.0 / (fan_in + fan_out))
            arrays[name] = rng.uniform(-a, a, size=shape)
        return cls(config, arrays)

    @property
    def dtype(self) -> np.dtype:
        return self.arrays["embedding"].dtype

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.config, {k: v.astype(dtype) for k, v in self.arrays.items()})

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.arrays.items()}

    @property
    def lstm_bottom(self) -> LstmWeights:
        return LstmWeights(self["bottom.W"], self["bottom.U"], self["bottom.b"])

    @property
    def lstm_top(self) -> LstmWeights:
        return LstmWeights(self["top.W"], self["top.U"], self["top.b"])

    @property
    def attn(self) -> AttentionWeights:
        return AttentionWeights(self["attn.W_a"], self["attn.U_a"], self["attn.b_a"], self["attn.w"])


CKPT_FORMAT = "hlstmat-checkpoint"


def checkpoint_paths(path: str | os.PathLike) -> tuple[Path, Path]:
    """Manifest and payload paths for a checkpoint stem (suffix ignored)."""
    p = Path(path)
    if p.suffix in (".json", ".bin"):
        p = p.with_suffix("")
    return p.with_name(p.name + ".json"), p.with_name(p.name + ".bin")


def save_checkpoint(path, params: ModelParams, vocab_words: list[str] | None = None, extra: dict | None = None) -> Path:
    """Write ``<stem>.json`` (names, shapes, offsets, config) and ``<stem>.bin`` (raw <f8 data)."""
    mpath, bpath = checkpoint_paths(path)
    mpath.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    with open(bpath, "wb") as fh:
        for name, arr in params.arrays.items():
            raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
            fh.write(raw)
            entries.append({"name": name, "shape": list(arr.shape), "dtype": "<f8", "offset": offset, "nbytes": len(raw)})
            offset += len(raw)
    manifest = {
        "format": CKPT_FORMAT,
        "version": 1,
        "payload": bpath.name,
        "config": asdict(params.config),
        "params": entries,
    }
    if vocab_words is not None:
        manifest["vocab"] = list(vocab_words)
    if extra:
        manifest["extra"] = extra
    mpath.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return mpath


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    """Returns ``(params, manifest)``."""
    mpath, _ = checkpoint_paths(path)
    manifest = json.loads(mpath.read_text(encoding="utf-8"))
    if manifest.get("format") != CKPT_FORMAT:
        raise FormatError(f"{mpath}: not a checkpoint manifest")
    blob = (mpath.parent / manifest["payload"]).read_bytes()
    arrays = {}
    for ent in manifest["params"]:
        end = ent["offset"] + ent["nbytes"]
        if end > len(blob):
            raise FormatError(f"{mpath}: payload truncated at byte offset {len(blob)}, {ent['name']} needs {end}")
        arrays[ent["name"]] = np.frombuffer(blob[ent["offset"]:end], dtype=ent["dtype"]).reshape(ent["shape"]).astype(np.float64)
    return ModelParams(ModelConfig.from_dict(manifest["config"]), arrays), manifest
