#!/usr/bin/env python3
"""Convert the 10,000 MNIST digits bundled in the npm `mnist` package to IDX files.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_subset_from_npm.py package/src/digits data/mnist

Writes `subset-images-idx3-ubyte` and `subset-labels-idx1-ubyte`. The package
stores pixels as byte/255 rounded to three decimals, so rounding back to the
nearest byte recovers the original values. Samples are interleaved with a fixed
permutation so that any prefix is class-balanced.
"""
import json
import os
import struct
import sys

import numpy as np


def main(src, dst):
    images, labels = [], []
    for digit in range(10):
        with open(os.path.join(src, f"{digit}.json")) as f:
            raw = np.asarray(json.load(f)["data"], dtype=np.float64)
        n = raw.size // 784
        images.append(np.rint(raw[: n * 784] * 255.0).clip(0, 255).astype(np.uint8).reshape(n, 784))
        labels.append(np.full(n, digit, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    perm = np.random.default_rng(0).permutation(len(labels))
    images, labels = images[perm], labels[perm]

    os.makedirs(dst, exist_ok=True)
    with open(os.path.join(dst, "subset-images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 2051, len(labels), 28, 28))
        f.write(images.tobytes())
    with open(os.path.join(dst, "subset-labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 2049, len(labels)))
        f.write(labels.tobytes())
    print(f"wrote {len(labels)} samples to {dst}")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2])
