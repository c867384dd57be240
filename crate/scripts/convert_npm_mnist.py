#!/usr/bin/env python3
"""Convert the digits bundled with the npm `mnist` package (MIT, J. Cazala)
into gzipped IDX files.

Usage: convert_npm_mnist.py <package/src/digits> <out dir>

Pixels in the JSON are x/255 rounded to three decimals; they are mapped back
to bytes with round(v * 255). Samples are shuffled with a fixed permutation
(numpy seed 20171016) so that any prefix is a class-mixed subset.
"""
import gzip
import json
import struct
import sys
from pathlib import Path

import numpy as np


def main() -> None:
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    images, labels = [], []
    for digit in range(10):
        raw = np.asarray(json.loads((src / f"{digit}.json").read_text())["data"])
        raw = raw.reshape(-1, 28, 28)
        images.append(np.clip(np.rint(raw * 255.0), 0, 255).astype(np.uint8))
        labels.append(np.full(raw.shape[0], digit, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    perm = np.random.default_rng(20171016).permutation(len(labels))
    images, labels = images[perm], labels[perm]

    out.mkdir(parents=True, exist_ok=True)
    with gzip.GzipFile(out / "images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        f.write(images.tobytes())
    with gzip.GzipFile(out / "labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.tobytes())
    print(f"wrote {len(labels)} samples to {out}")


if __name__ == "__main__":
    main()
