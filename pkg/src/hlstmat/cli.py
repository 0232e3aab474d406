"""Command-line entry point: ``hlstmat {synth,train,generate,eval,gradcheck}``.

Exit codes: 0 success, 1 usage or configuration error, 2 numeric failure
(divergence, failed gradient check), 3 input/output error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .attention import TraceEntry, write_trace_jsonl
from .data import FormatError, Vocabulary, build_vocab, load_dataset, read_captions_jsonl, save_dataset, synth_corpus, tokenize
from .decoder import check_gradients, loss_and_grad, tiny_problem
from .evaluation import bleu_from_maps
from .inference import DEFAULT_BEAM, DEFAULT_MAX_LEN, beam_search, generation_record, read_generations_jsonl, write_generations_jsonl
from .model import ModelParams, load_checkpoint, save_checkpoint
from .numerics import DimensionError, DomainError, NumericError
from .training import TrainConfig, config_dict, load_config, model_config_for, train, write_history_csv

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("hlstmat")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def cmd_synth(args) -> int:
    dataset, records = synth_corpus(args.seed, args.num_videos)
    mpath = save_dataset(args.out, dataset, records)
    print(f"wrote {len(dataset.videos)} videos to {mpath}")
    return EXIT_OK


_TRAIN_FLAGS = ("batch_size", "max_epochs", "patience", "clip", "dropout", "val_metric", "max_len")
_MODEL_FLAGS = ("d_e", "d_h", "d_a", "d_p", "top_init", "output_hidden")


def cmd_train(args) -> int:
    manifest = _require(args.manifest, "dataset manifest")
    val_manifest = _require(args.val_manifest, "validation manifest") if args.val_manifest else manifest
    if args.config:
        tc, model_over = load_config(_require(args.config, "config"))
    else:
        tc, model_over = TrainConfig(), {}
    over = {k: getattr(args, k) for k in _TRAIN_FLAGS if getattr(args, k) is not None}
    if args.seed is not None:
        over["seed"] = args.seed
    tc = TrainConfig(**{**config_dict(tc), **over})
    model_over.update({k: getattr(args, k) for k in _MODEL_FLAGS if getattr(args, k) is not None})

    train_set = load_dataset(manifest)
    val_set = train_set if val_manifest == manifest else load_dataset(val_manifest)
    vocab = build_vocab([toks for _, toks in train_set.texts], min_count=args.min_count)
    mcfg = model_config_for(vocab, train_set.d_f, model_over)
    params = ModelParams.init(mcfg, seed=tc.seed)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run = config_dict(tc, model_over)
    (out / "config.json").write_text(json.dumps(run, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    result = train(train_set, val_set, vocab, tc, params)
    extra = {"best_epoch": result.best_epoch, "epochs": len(result.history)}
    save_checkpoint(out / "best", result.best_params, vocab.words, extra)
    save_checkpoint(out / "final", result.final_params, vocab.words, extra)
    write_history_csv(out / "history.csv", result.history)
    last = result.history[-1]
    print(f"{len(result.history)} epochs (best {result.best_epoch}); final train loss {last.train_loss:.4f}, "
          f"val {tc.val_metric} {last.val_metric:.4f}; wrote {out}")
    return EXIT_OK


def cmd_generate(args) -> int:
    params, man = load_checkpoint(_require(Path(args.checkpoint).with_suffix(".json"), "checkpoint"))
    if "vocab" not in man:
        raise UsageError(f"{args.checkpoint}: checkpoint carries no vocabulary")
    vocab = Vocabulary(man["vocab"])
    if len(vocab) != params.config.vocab_size:
        raise DimensionError(f"checkpoint vocabulary has {len(vocab)} entries, model expects {params.config.vocab_size}")
    dataset = load_dataset(_require(args.manifest, "dataset manifest"))
    if dataset.d_f != params.config.d_f:
        raise DimensionError(f"features have d_f={dataset.d_f} but the checkpoint expects d_f={params.config.d_f}")

    records, trace = [], []
    for vid in sorted(dataset.videos):
        hyp = beam_search(dataset.videos[vid], params, args.beam, args.max_len, trace=args.trace)[0]
        records.append(generation_record(vid, hyp, vocab))
        if args.trace:
            for t, (tok, a, b) in enumerate(zip(hyp.generated, hyp.alphas, hyp.betas), start=1):
                trace.append(TraceEntry(t, [float(x) for x in a], b, vocab.id_to_token[tok], vid))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_generations_jsonl(out, records)
    if args.trace:
        write_trace_jsonl(trace_path(out), trace)
    print(f"wrote {len(records)} captions to {out}")
    return EXIT_OK


def trace_path(generated: Path) -> Path:
    """Sidecar file holding per-step attention traces next to ``generated``."""
    return generated.with_name(generated.stem + ".trace.jsonl")


def cmd_eval(args) -> int:
    gen = read_generations_jsonl(_require(args.generated, "generated captions"))
    refs: dict[str, list[list[str]]] = {}
    for vid, text in read_captions_jsonl(_require(args.references, "reference captions")):
        refs.setdefault(vid, []).append(tokenize(text, args.tokenizer))
    hyps = {r["video_id"]: tokenize(r["caption"], args.tokenizer) for r in gen}
    if not hyps:
        raise DomainError("no generated captions to score")
    scores = bleu_from_maps(hyps, refs, smooth=args.smooth)
    print(json.dumps(scores, sort_keys=True))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    overrides = {}
    if args.config:
        _, overrides = load_config(_require(args.config, "config"))
    for k in ("d_e", "d_h", "d_a", "d_p"):
        if overrides.get(k, 8) != 8:
            raise UsageError("gradcheck runs the tiny model; dimension overrides are not allowed")
    params, pairs = tiny_problem(args.seed or 0, **overrides)
    report = check_gradients(params, pairs, tol=args.tol, grad_fn=loss_and_grad)
    print(report)
    return EXIT_OK if report.passed else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hlstmat", description="Hierarchical LSTM video captioner with adjusted temporal attention.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def seeded(sp):
        sp.add_argument("--seed", type=int, default=None, help="the only source of randomness")
        return sp

    s = seeded(sub.add_parser("synth", help="write the synthetic template corpus"))
    s.add_argument("--out", required=True)
    s.add_argument("--num-videos", type=int, default=50)
    s.set_defaults(func=cmd_synth)

    t = seeded(sub.add_parser("train", help="train and write best/final checkpoints plus history.csv"))
    t.add_argument("--config", help="JSON run config (training and model fields)")
    t.add_argument("--manifest", required=True)
    t.add_argument("--val-manifest", help="validation data (default: the training manifest)")
    t.add_argument("--out", required=True)
    t.add_argument("--min-count", type=int, default=1)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--max-epochs", type=int)
    t.add_argument("--patience", type=int)
    t.add_argument("--clip", type=float)
    t.add_argument("--dropout", type=float)
    t.add_argument("--val-metric", choices=("bleu4", "loss"))
    t.add_argument("--max-len", type=int)
    for k in ("--d-e", "--d-h", "--d-a", "--d-p"):
        t.add_argument(k, type=int)
    t.add_argument("--top-init", choices=("zero", "meanpool"))
    t.add_argument("--output-hidden", choices=("bottom", "top"))
    t.set_defaults(func=cmd_train)

    g = seeded(sub.add_parser("generate", help="caption every video of a dataset"))
    g.add_argument("--checkpoint", required=True, help="checkpoint stem or its .json manifest")
    g.add_argument("--manifest", required=True)
    g.add_argument("--out", required=True, help="output JSONL")
    g.add_argument("--beam", type=int, default=DEFAULT_BEAM)
    g.add_argument("--max-len", type=int, default=DEFAULT_MAX_LEN)
    g.add_argument("--trace", action="store_true", help="also write per-step alpha/beta to <out>.trace.jsonl")
    g.set_defaults(func=cmd_generate)

    e = seeded(sub.add_parser("eval", help="corpus BLEU@1-4 of generated captions"))
    e.add_argument("--generated", required=True)
    e.add_argument("--references", required=True, help="captions JSONL ({video_id, caption} per line)")
    e.add_argument("--tokenizer", choices=("msvd", "msrvtt"), default="msvd")
    e.add_argument("--smooth", action="store_true")
    e.set_defaults(func=cmd_eval)

    c = seeded(sub.add_parser("gradcheck", help="central-difference check of the tiny model"))
    c.add_argument("--config", help="JSON with model variant fields (top_init, output_hidden, literal_eq10)")
    c.add_argument("--tol", type=float, default=1e-4)
    c.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is None and args.command == "synth":
        args.seed = 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"hlstmat: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, FormatError) as exc:
        print(f"hlstmat: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except KeyError as exc:
        print(f"hlstmat: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, DimensionError, DomainError, ValueError, TypeError) as exc:
        print(f"hlstmat: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
