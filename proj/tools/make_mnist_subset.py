#!/usr/bin/env python3
"""Build a small MNIST train/test pair in IDX format from the digit dumps
shipped by the `mnist` npm package (src/digits/<d>.json, 784 floats per image
in [0,1]).

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/make_mnist_subset.py package/src/digits data/mnist
"""
import argparse
import json
import pathlib
import random
import struct

SIDE = 28


def write_idx_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), SIDE, SIDE))
        for img in images:
            f.write(bytes(img))


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--train-per-class", type=int, default=500)
    ap.add_argument("--test-per-class", type=int, default=200)
    ap.add_argument("--seed", type=int, default=20240521)
    args = ap.parse_args()

    train, test = [], []
    for digit in range(10):
        raw = json.loads((pathlib.Path(args.digits_dir) / f"{digit}.json").read_text())["data"]
        n = len(raw) // (SIDE * SIDE)
        need = args.train_per_class + args.test_per_class
        if n < need:
            raise SystemExit(f"digit {digit}: only {n} samples, need {need}")
        imgs = []
        for i in range(need):
            px = raw[i * SIDE * SIDE:(i + 1) * SIDE * SIDE]
            imgs.append([max(0, min(255, round(v * 255))) for v in px])
        train += [(img, digit) for img in imgs[:args.train_per_class]]
        test += [(img, digit) for img in imgs[args.train_per_class:]]

    rng = random.Random(args.seed)
    rng.shuffle(train)
    rng.shuffle(test)

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_idx_images(out / "train-images-idx3-ubyte", [x for x, _ in train])
    write_idx_labels(out / "train-labels-idx1-ubyte", [y for _, y in train])
    write_idx_images(out / "t10k-images-idx3-ubyte", [x for x, _ in test])
    write_idx_labels(out / "t10k-labels-idx1-ubyte", [y for _, y in test])
    print(f"wrote {len(train)} train / {len(test)} test images to {out}")


if __name__ == "__main__":
    main()
