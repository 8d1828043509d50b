#!/usr/bin/env python3
"""Convert per-class JSON pixel dumps (e.g. the `fashion-mnist` npm package)
into gzip-free IDX files with a deterministic train/test split.

Each input file <dir>/<label>.json holds {"data": [[784 ints 0..255], ...]}.
"""
import argparse
import random
import struct
import json
from pathlib import Path


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("src", type=Path)
    ap.add_argument("dst", type=Path)
    ap.add_argument("--train-per-class", type=int, default=6000)
    ap.add_argument("--test-per-class", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=1234)
    args = ap.parse_args()

    train, test = [], []
    for label in range(10):
        rows = json.loads((args.src / f"{label}.json").read_text())["data"]
        # some dumps carry empty placeholder rows
        rows = [r for r in rows if len(r) == 784]
        need = args.train_per_class + args.test_per_class
        if len(rows) < need:
            raise SystemExit(f"class {label}: {len(rows)} rows < {need}")
        train += [(r, label) for r in rows[: args.train_per_class]]
        test += [(r, label) for r in rows[args.train_per_class : need]]

    rng = random.Random(args.seed)
    rng.shuffle(train)
    rng.shuffle(test)
    args.dst.mkdir(parents=True, exist_ok=True)
    for name, split in (("train", train), ("t10k", test)):
        write_images(args.dst / f"{name}-images-idx3-ubyte", [r for r, _ in split])
        write_labels(args.dst / f"{name}-labels-idx1-ubyte", [l for _, l in split])
        print(f"{name}: {len(split)} examples")


if __name__ == "__main__":
    main()
