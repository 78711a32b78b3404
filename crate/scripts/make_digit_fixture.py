#!/usr/bin/env python3
"""Build the desk-scale digit fixture (IDX, gzip) from the npm `mnist` package.

The package ships 10,000 MNIST digits as per-class JSON arrays of
784 floats in [0, 1] (three decimals). Pixels are re-quantized to u8 with
round(v * 255), shuffled with a fixed seed and split 8000 / 2000.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/make_digit_fixture.py package/src/digits data/
"""
import gzip
import json
import os
import struct
import sys

import numpy as np

TRAIN = 8000
SEED = 20111


def write_idx(path, arr):
    arr = np.ascontiguousarray(arr, dtype=np.uint8)
    header = struct.pack(">I", 0x0800 | arr.ndim) + b"".join(
        struct.pack(">I", d) for d in arr.shape
    )
    # mtime=0 keeps the output byte-identical across runs
    with open(path, "wb") as raw:
        with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0, filename="") as f:
            f.write(header)
            f.write(arr.tobytes())


def main():
    src, out = sys.argv[1], sys.argv[2]
    images, labels = [], []
    for digit in range(10):
        with open(os.path.join(src, f"{digit}.json")) as f:
            data = np.array(json.load(f)["data"], dtype=np.float64).reshape(-1, 784)
        images.append(np.rint(data * 255.0).clip(0, 255).astype(np.uint8))
        labels.append(np.full(len(data), digit, dtype=np.uint8))
    x = np.concatenate(images).reshape(-1, 28, 28)
    y = np.concatenate(labels)
    order = np.random.default_rng(SEED).permutation(len(y))
    x, y = x[order], y[order]
    os.makedirs(out, exist_ok=True)
    write_idx(os.path.join(out, "digits-train-images-idx3-ubyte.gz"), x[:TRAIN])
    write_idx(os.path.join(out, "digits-train-labels-idx1-ubyte.gz"), y[:TRAIN])
    write_idx(os.path.join(out, "digits-test-images-idx3-ubyte.gz"), x[TRAIN:])
    write_idx(os.path.join(out, "digits-test-labels-idx1-ubyte.gz"), y[TRAIN:])
    print(f"train {TRAIN}, test {len(y) - TRAIN}, counts {np.bincount(y).tolist()}")


if __name__ == "__main__":
    main()
