"""Run the full workflow on real MSVD frame features.

Nothing here is exercised by the test suite. It converts precomputed CNN
features (one ``<video_id>.npy`` array of shape (frames, d_f) per clip, e.g.
28 frames of 2048-d ResNet pool5 output) and the MSVD caption CSV into the
on-disk layout the ``hlstmat`` command reads, then prints or runs the train,
generate and eval commands with the published hyperparameters:
512-d embeddings and LSTMs, batch 64, adadelta, dropout 0.5, clip 10,
500 epochs with patience 20, beam width 5.

Expect days of CPU time at that size. Only BLEU is computed; METEOR needs
external resources and is out of scope.

Example:
    python demos/msvd_real_features.py --features feats/ --captions video_corpus.csv \\
        --splits splits/ --out msvd/ --run
where ``splits/`` holds train.txt, val.txt and test.txt with one clip id per line.
"""

import argparse
import csv
import json
import shlex
import subprocess
import sys
from pathlib import Path

import numpy as np

from hlstmat.data import write_captions_jsonl, write_features

PUBLISHED = {"d_e": 512, "d_h": 512, "batch_size": 64, "max_epochs": 500, "patience": 20, "clip": 10.0,
             "dropout": 0.5, "rho": 0.95, "eps": 1e-6, "val_metric": "bleu4"}


def read_msvd_csv(path):
    """English descriptions keyed by ``<VideoID>_<Start>_<End>``."""
    caps = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            if row.get("Language") != "English" or not row.get("Description"):
                continue
            vid = f"{row['VideoID']}_{row['Start']}_{row['End']}"
            caps.setdefault(vid, []).append(row["Description"].strip())
    return caps


def convert_split(name, ids, features, captions, out):
    root = out / name
    (root / "features").mkdir(parents=True, exist_ok=True)
    records = []
    for vid in ids:
        src = features / f"{vid}.npy"
        if not src.exists() or vid not in captions:
            print(f"  skip {vid}: missing features or captions", file=sys.stderr)
            continue
        write_features(root / "features" / f"{vid}.hlsf", np.load(src).astype(np.float32))
        records.extend((vid, c) for c in captions[vid])
    write_captions_jsonl(root / "captions.jsonl", records)
    manifest = {"features_dir": "features", "captions": "captions.jsonl", "tokenizer": "msvd"}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"{name}: {len({r[0] for r in records})} videos, {len(records)} captions")
    return root / "manifest.json"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--features", type=Path, required=True, help="directory of <video_id>.npy arrays")
    ap.add_argument("--captions", type=Path, required=True, help="MSVD video_corpus.csv")
    ap.add_argument("--splits", type=Path, required=True, help="directory with train.txt, val.txt, test.txt")
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--run", action="store_true", help="run the commands instead of printing them")
    args = ap.parse_args(argv)

    captions = read_msvd_csv(args.captions)
    manifests = {}
    for split in ("train", "val", "test"):
        ids = (args.splits / f"{split}.txt").read_text(encoding="utf-8").split()
        manifests[split] = convert_split(split, ids, args.features, captions, args.out)
    cfg = args.out / "config.json"
    cfg.write_text(json.dumps(PUBLISHED, indent=2) + "\n", encoding="utf-8")

    run, gen = args.out / "run", args.out / "test_generated.jsonl"
    test_refs = manifests["test"].parent / "captions.jsonl"
    commands = [
        ["hlstmat", "-v", "train", "--config", cfg, "--manifest", manifests["train"],
         "--val-manifest", manifests["val"], "--out", run, "--seed", args.seed],
        ["hlstmat", "generate", "--checkpoint", run / "best", "--manifest", manifests["test"], "--out", gen],
        ["hlstmat", "eval", "--generated", gen, "--references", test_refs],
    ]
    for cmd in commands:
        cmd = [str(c) for c in cmd]
        print("$", shlex.join(cmd))
        if args.run:
            subprocess.run(cmd, check=True)


if __name__ == "__main__":
    main()
