#!/usr/bin/env python3
"""Convert the digit JSON files shipped in the `mnist` npm package into
gzip-compressed IDX files (the standard MNIST on-disk layout).

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_from_npm.py package/src/digits data/mnist

The npm package carries 10k real MNIST digits (roughly 1k per class). Each
class is split deterministically: the first 80% of its samples become the
training split, the remaining 20% the test split.
"""
import argparse
import gzip
import json
import struct
from pathlib import Path

SIDE = 28
TRAIN_FRACTION = 0.8


def write_images(path, images):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), SIDE, SIDE))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir", type=Path)
    ap.add_argument("out_dir", type=Path)
    args = ap.parse_args()

    splits = {"train": ([], []), "t10k": ([], [])}
    for digit in range(10):
        raw = json.loads((args.digits_dir / f"{digit}.json").read_text())["data"]
        n = len(raw) // (SIDE * SIDE)
        n_train = int(n * TRAIN_FRACTION)
        for k in range(n):
            px = raw[k * SIDE * SIDE:(k + 1) * SIDE * SIDE]
            img = [max(0, min(255, round(v * 255))) for v in px]
            images, labels = splits["train" if k < n_train else "t10k"]
            images.append(img)
            labels.append(digit)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    for name, (images, labels) in splits.items():
        write_images(args.out_dir / f"{name}-images-idx3-ubyte.gz", images)
        write_labels(args.out_dir / f"{name}-labels-idx1-ubyte.gz", labels)
        print(f"{name}: {len(images)} images")


if __name__ == "__main__":
    main()
