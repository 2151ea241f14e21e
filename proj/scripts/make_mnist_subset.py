#!/usr/bin/env python3
"""Build IDX files from the 5000-sample MNIST subset shipped inside the mlxtend wheel.

Usage: make_mnist_subset.py OUT_DIR [WHEEL]
Without WHEEL, the wheel is fetched with `pip download mlxtend`.
Writes a stratified split (first 400 samples of each digit to train, the
remaining 100 to test) in the standard big-endian IDX layout.
"""
import glob
import gzip
import os
import struct
import subprocess
import sys
import tempfile
import zipfile


def write_idx(path, magic, dims, payload):
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(payload)


def main():
    out = sys.argv[1]
    wheel = sys.argv[2] if len(sys.argv) > 2 else None
    if wheel is None:
        tmp = tempfile.mkdtemp()
        subprocess.check_call([sys.executable, "-m", "pip", "download", "--no-deps",
                               "mlxtend==0.24.0", "-d", tmp])
        wheel = glob.glob(os.path.join(tmp, "mlxtend-*.whl"))[0]
    raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")
    rows = gzip.decompress(raw).decode().splitlines()
    pixels, labels = bytearray(), bytearray()
    for line in rows:
        vals = [int(float(v)) for v in line.split(",")]
        pixels.extend(vals[:784])
        labels.append(vals[784])
    os.makedirs(out, exist_ok=True)
    seen = [0] * 10
    split = {"train": [], "test": []}
    for i, lab in enumerate(labels):
        split["train" if seen[lab] < 400 else "test"].append(i)
        seen[lab] += 1
    for name, idx in split.items():
        img = b"".join(bytes(pixels[i * 784:(i + 1) * 784]) for i in idx)
        write_idx(os.path.join(out, f"mnist5k-{name}-images-idx3-ubyte"), 0x803,
                  (len(idx), 28, 28), img)
        write_idx(os.path.join(out, f"mnist5k-{name}-labels-idx1-ubyte"), 0x801, (len(idx),),
                  bytes(labels[i] for i in idx))


if __name__ == "__main__":
    main()
