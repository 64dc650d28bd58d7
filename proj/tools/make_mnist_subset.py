#!/usr/bin/env python3
"""Build the bundled 10k MNIST subset as gzipped IDX files.

Source: the `mnist` npm package (10,000 MNIST digits stored as JSON arrays of
784 intensities rounded to three decimals). Intensities are mapped back to
bytes with round(v * 255); the rounding is unambiguous because adjacent byte
levels are 1/255 apart. Samples are interleaved with a fixed permutation so
that any prefix is class-balanced in expectation.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/make_mnist_subset.py package/src/digits data/mnist-subset
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path


def main(src: Path, dst: Path) -> None:
    samples = []
    for digit in range(10):
        values = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(values) % 784 == 0
        for i in range(0, len(values), 784):
            pixels = []
            for v in values[i:i + 784]:
                b = round(v * 255)
                assert abs(b / 255 - v) < 1e-3, v
                pixels.append(b)
            samples.append((bytes(pixels), digit))
    random.Random(20250101).shuffle(samples)
    dst.mkdir(parents=True, exist_ok=True)
    n = len(samples)
    images = struct.pack(">IIII", 0x00000803, n, 28, 28) + b"".join(s[0] for s in samples)
    labels = struct.pack(">II", 0x00000801, n) + bytes(s[1] for s in samples)
    # mtime=0 keeps the archives byte-reproducible
    with gzip.GzipFile(dst / "images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(images)
    with gzip.GzipFile(dst / "labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(labels)
    print(f"wrote {n} samples to {dst}")


if __name__ == "__main__":
    main(Path(sys.argv[1]), Path(sys.argv[2]))
