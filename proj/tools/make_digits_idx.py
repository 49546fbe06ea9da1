#!/usr/bin/env python3
"""Export the UCI optical-digits set bundled with scikit-learn as IDX files.

The 8x8 images (16 gray levels) are bilinearly upsampled to 16x16 and
rescaled to 0..255 so they can be consumed by the IDX loader like MNIST.
"""
import argparse
import struct

import numpy as np
from scipy.ndimage import zoom
from sklearn.datasets import load_digits


def write_idx_images(path, images):
    n, h, w = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, h, w))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=16)
    ap.add_argument("--prefix", default="tests/data/digits16")
    args = ap.parse_args()

    digits = load_digits()
    raw = digits.images / 16.0
    factor = args.size / 8.0
    up = np.stack([zoom(img, factor, order=1) for img in raw])
    up = np.clip(np.rint(up * 255.0), 0, 255)
    write_idx_images(args.prefix + "-images.idx", up)
    write_idx_labels(args.prefix + "-labels.idx", digits.target)
    print(f"wrote {len(up)} images of {up.shape[1]}x{up.shape[2]}")


if __name__ == "__main__":
    main()
