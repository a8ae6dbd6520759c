#!/usr/bin/env python3
# Copyright 2026 The LAF Authors
# SPDX-License-Identifier: Apache-2.0
"""Builds the 10k-sample DIGITS subset as gzipped IDX files.

The source is the `mnist` npm package, which ships 10,000 MNIST digits as
normalized 784-float arrays. Pixels are re-quantized to bytes and split
80/20 per class into train/test, then shuffled with a fixed seed.

    python3 tools/fetch_digits.py --out data/digits10k
    python3 tools/fetch_digits.py --package /path/to/extracted/package --out ...
"""
import argparse
import gzip
import json
import pathlib
import struct
import subprocess
import tarfile
import tempfile

import numpy as np


def load_package(pkg_dir: pathlib.Path):
    images, labels = [], []
    for digit in range(10):
        with open(pkg_dir / "src" / "digits" / f"{digit}.json") as f:
            flat = np.asarray(json.load(f)["data"], dtype=np.float64)
        if flat.size % 784:
            raise ValueError(f"digit {digit}: payload not a multiple of 784")
        rows = flat.reshape(-1, 784)
        images.append(np.clip(np.rint(rows * 255.0), 0, 255).astype(np.uint8))
        labels.append(np.full(rows.shape[0], digit, dtype=np.uint8))
    return images, labels


def write_idx(path: pathlib.Path, array: np.ndarray):
    magic = 0x00000800 | {1: 0x01, 3: 0x03}[array.ndim]
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">I", magic))
        for d in array.shape:
            f.write(struct.pack(">I", d))
        f.write(array.tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--package", type=pathlib.Path)
    ap.add_argument("--out", type=pathlib.Path, required=True)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        pkg = args.package
        if pkg is None:
            subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=tmp, check=True,
                           stdout=subprocess.DEVNULL)
            with tarfile.open(pathlib.Path(tmp) / "mnist-1.1.0.tgz") as tar:
                tar.extractall(tmp)
            pkg = pathlib.Path(tmp) / "package"
        images, labels = load_package(pkg)

    train_x, train_y, test_x, test_y = [], [], [], []
    for x, y in zip(images, labels):
        is_test = (np.arange(len(y)) % 5) == 4
        train_x.append(x[~is_test]); train_y.append(y[~is_test])
        test_x.append(x[is_test]); test_y.append(y[is_test])

    rng = np.random.RandomState(20240101)
    args.out.mkdir(parents=True, exist_ok=True)
    for name, xs, ys in (("train", train_x, train_y), ("test", test_x, test_y)):
        x = np.concatenate(xs); y = np.concatenate(ys)
        order = rng.permutation(len(y))
        x = x[order].reshape(-1, 28, 28); y = y[order]
        write_idx(args.out / f"{name}-images-idx3-ubyte.gz", x)
        write_idx(args.out / f"{name}-labels-idx1-ubyte.gz", y)
        print(f"{name}: {len(y)} samples")


if __name__ == "__main__":
    main()
