#!/usr/bin/env python3
"""Write the scikit-learn handwritten digits as 28x28 MNIST-style IDX files.

The 8x8 images (intensities 0..16) are upsampled bilinearly to 28x28 and
rescaled to bytes 0..255, giving a small offline stand-in with MNIST's file
format, input dimension and pixel range.
"""
import argparse
import struct
from pathlib import Path

import numpy as np
from scipy.ndimage import zoom
from sklearn.datasets import load_digits


def write_idx(images: np.ndarray, labels: np.ndarray, out_dir: Path, prefix: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    n, rows, cols = images.shape
    with open(out_dir / f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 2051, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())
    with open(out_dir / f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 2049, n))
        f.write(labels.astype(np.uint8).tobytes())


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", type=Path, default=Path("data"))
    ap.add_argument("--prefix", default="digits28")
    args = ap.parse_args()

    digits = load_digits()
    small = digits.images.astype(np.float64) / 16.0
    big = np.stack([zoom(img, 28 / 8, order=1) for img in small])
    big = np.clip(np.rint(big * 255.0), 0, 255)
    write_idx(big, digits.target, args.out_dir, args.prefix)
    print(f"wrote {big.shape[0]} images of {big.shape[1]}x{big.shape[2]} to {args.out_dir}")


if __name__ == "__main__":
    main()
