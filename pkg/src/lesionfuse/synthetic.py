"""Seeded synthetic lesion-like dataset for smoke tests and the demo.

Benign samples are dark patches (base intensity 64), malignant ones bright
(base 192), both with uniform integer noise of +/-40, clipped to byte range.
The two classes are linearly separable by mean intensity, so both toy
backbones can reach high training accuracy inside the standard epoch
budget.  Labels alternate benign/malignant so every contiguous slice and
every shuffled split contains both classes.
"""

import csv
from pathlib import Path

import numpy as np

from .data import encode_pgm

__all__ = ["make_arrays", "write_dataset"]

_BENIGN_BASE = 64
_MALIGNANT_BASE = 192
_NOISE = 40


def make_arrays(n=200, size=8, seed=7):
    """Return (pixels uint8 (N,1,size,size), labels int64 (N,))."""
    if n < 2:
        raise ValueError(f"need at least 2 samples for both classes, got {n}")
    rng = np.random.default_rng(seed)
    labels = np.arange(n, dtype=np.int64) % 2
    base = np.where(labels == 1, _MALIGNANT_BASE, _BENIGN_BASE)
    noise = rng.integers(-_NOISE, _NOISE + 1, size=(n, 1, size, size))
    pixels = np.clip(base[:, None, None, None] + noise, 0, 255).astype(np.uint8)
    return pixels, labels


def write_dataset(out_dir, n=200, size=8, seed=7):
    """Write n PGM files plus a manifest CSV; returns the manifest path."""
    out_dir = Path(out_dir)
    image_dir = out_dir / "images"
    image_dir.mkdir(parents=True, exist_ok=True)
    pixels, labels = make_arrays(n=n, size=size, seed=seed)
    manifest_path = out_dir / "manifest.csv"
    with open(manifest_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "path", "label"])
        for i in range(n):
            sample_id = f"s{i:04d}"
            rel_path = f"images/{sample_id}.pgm"
            encode_pgm(out_dir / rel_path, pixels[i])
            writer.writerow([sample_id, rel_path, "malignant" if labels[i] else "benign"])
    return manifest_path
