#!/usr/bin/env python3
"""Builds a balanced Fashion-MNIST subset in IDX format.

The images come from the `fashion-mnist` npm package, which ships all 70,000
28x28 grayscale images as raw 0-255 values grouped per class. The first
`--train-per-class` images of every class form the training split and the last
`--val-per-class` images form the validation split. Both splits are shuffled
with a fixed seed so the output is reproducible byte for byte.
"""
import argparse
import json
import pathlib
import random
import shutil
import struct
import subprocess
import tarfile
import tempfile


def write_idx(path, images, labels_path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="tests/data/fashion-mnist")
    parser.add_argument("--package", help="already unpacked npm package dir")
    parser.add_argument("--train-per-class", type=int, default=500)
    parser.add_argument("--val-per-class", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    tmp = None
    pkg = pathlib.Path(args.package) if args.package else None
    if pkg is None:
        tmp = pathlib.Path(tempfile.mkdtemp())
        subprocess.run(["npm", "pack", "fashion-mnist@1.1.0"], cwd=tmp, check=True,
                       stdout=subprocess.DEVNULL)
        with tarfile.open(next(tmp.glob("fashion-mnist-*.tgz"))) as tar:
            tar.extractall(tmp)
        pkg = tmp / "package"

    train, val = [], []
    for label in range(10):
        rows = json.loads((pkg / "src" / "clothes" / f"{label}.json").read_text())["data"]
        # A few entries in the package are empty; keep only complete 28x28 images.
        rows = [r for r in rows if len(r) == 28 * 28]
        assert len(rows) >= args.train_per_class + args.val_per_class
        train += [(r, label) for r in rows[:args.train_per_class]]
        val += [(r, label) for r in rows[-args.val_per_class:]]

    rng = random.Random(args.seed)
    rng.shuffle(train)
    rng.shuffle(val)

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out / "train-images-idx3-ubyte", [r for r, _ in train],
              out / "train-labels-idx1-ubyte", [l for _, l in train])
    write_idx(out / "val-images-idx3-ubyte", [r for r, _ in val],
              out / "val-labels-idx1-ubyte", [l for _, l in val])
    print(f"wrote {len(train)} train / {len(val)} val images to {out}")
    if tmp is not None:
        shutil.rmtree(tmp)


if __name__ == "__main__":
    main()
