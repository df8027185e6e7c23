#!/usr/bin/env python3
"""Build IDX files from the digit JSON shipped in the `mnist` npm package.

The npm package (https://www.npmjs.com/package/mnist) bundles 10,000 MNIST
digits as JSON arrays of grey levels in [0, 1] rounded to three decimals,
which round-trips exactly to the original bytes.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_from_npm.py package/src/digits data/mnist-01 \
        --classes 0 1 --train 2000
"""
import argparse
import json
import random
import struct
from pathlib import Path


def load_digit(digits_dir, digit):
    flat = json.loads((Path(digits_dir) / f"{digit}.json").read_text())["data"]
    assert len(flat) % 784 == 0
    out = []
    for i in range(0, len(flat), 784):
        img = bytes(int(round(v * 255)) for v in flat[i : i + 784])
        out.append(img)
    return out


def write_idx(dir_, prefix, samples):
    images = struct.pack(">IIII", 0x803, len(samples), 28, 28)
    images += b"".join(img for img, _ in samples)
    labels = struct.pack(">II", 0x801, len(samples)) + bytes(l for _, l in samples)
    (dir_ / f"{prefix}-images-idx3-ubyte").write_bytes(images)
    (dir_ / f"{prefix}-labels-idx1-ubyte").write_bytes(labels)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--classes", type=int, nargs="+", default=list(range(10)))
    ap.add_argument("--train", type=int, required=True, help="training samples; the rest become the test split")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    samples = [(img, d) for d in args.classes for img in load_digit(args.digits_dir, d)]
    random.Random(args.seed).shuffle(samples)
    if args.train >= len(samples):
        raise SystemExit(f"only {len(samples)} samples available")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out, "train", samples[: args.train])
    write_idx(out, "t10k", samples[args.train :])
    print(f"{args.train} train / {len(samples) - args.train} test samples written to {out}")


if __name__ == "__main__":
    main()
