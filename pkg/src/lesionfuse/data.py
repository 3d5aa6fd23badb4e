"""Dataset manifest, image codecs, preprocessing, and deterministic splits.

The on-disk contract is deliberately tiny: a CSV manifest (``id,path,label``)
pointing at binary PGM (P5) / PPM (P6) images or raw ``FTEN`` tensors.
Decoding preserves stored byte values exactly as floats 0..255; models see
values only after :func:`normalize` divides by 255.  Labels come from the
closed class set {benign, malignant} with benign -> 0 and malignant -> 1.

Splitting is a seeded uniform shuffle cut into test / validation / train.
The test count is ``ceil(n * test_frac)`` and the validation count
``floor(pool * val_frac)`` of the remaining pool, so 3297 samples yield the
660 / 2637 partition (and 263 validation of the 2637) by construction.
"""

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "DataError",
    "ManifestRecord",
    "Manifest",
    "SplitConfig",
    "load_manifest",
    "decode_image",
    "encode_pgm",
    "encode_ppm",
    "encode_ften",
    "decode_ften",
    "normalize",
    "encode_label",
    "smooth",
    "resize_nearest",
    "split",
    "load_samples",
    "CLASS_NAMES",
    "SMOOTHING_KINDS",
]

CLASS_NAMES = ("benign", "malignant")
SMOOTHING_KINDS = ("none", "mean3", "median3")

FTEN_MAGIC = b"FTEN"
FTEN_VERSION = 1


class DataError(Exception):
    """Malformed manifest, image file, or impossible split."""


@dataclass(frozen=True)
class ManifestRecord:
    sample_id: str
    path: str
    label: str


class Manifest:
    """Ordered manifest records with unique sample ids."""

    def __init__(self, records, base_dir="."):
        self.records = list(records)
        self.base_dir = Path(base_dir)
        seen = set()
        for record in self.records:
            if record.sample_id in seen:
                raise DataError(f"duplicate sample id {record.sample_id!r} in manifest")
            seen.add(record.sample_id)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, index):
        return self.records[index]

    def resolve_path(self, record):
        """Relative manifest paths resolve against the manifest's directory."""
        path = Path(record.path)
        return path if path.is_absolute() else self.base_dir / path


def load_manifest(path):
    """Parse a CSV manifest with header ``id,path,label``."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"manifest {path} is empty") from None
        if header != ["id", "path", "label"]:
            raise DataError(
                f"manifest {path} must start with header 'id,path,label', got {','.join(header)!r}"
            )
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"manifest {path} line {lineno}: expected 3 fields, got {len(row)}")
            sample_id, rel_path, label = (f.strip() for f in row)
            if not sample_id or not rel_path:
                raise DataError(f"manifest {path} line {lineno}: empty id or path")
            if label.lower() not in CLASS_NAMES:
                raise DataError(
                    f"manifest {path} line {lineno}: unknown class {label!r}, "
                    f"expected one of {list(CLASS_NAMES)}"
                )
            records.append(ManifestRecord(sample_id, rel_path, label))
    return Manifest(records, base_dir=path.parent)


def _read_file(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"image not found: {path}")
    return path.read_bytes()


def _parse_pnm_header(blob, path):
    """Return (width, height, maxval, data offset) for a P5/P6 header."""
    pos = 2  # past the magic
    fields = []
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError(f"{path}: malformed image header")
        token = blob[start:pos]
        try:
            fields.append(int(token))
        except ValueError:
            raise DataError(f"{path}: non-numeric header token {token!r}") from None
    if pos >= len(blob):
        raise DataError(f"{path}: header ends before pixel data")
    pos += 1  # exactly one whitespace byte separates header and data
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise DataError(f"{path}: bad dimensions {width}x{height}")
    if not 0 < maxval <= 255:
        raise DataError(f"{path}: unsupported maxval {maxval} (only 8-bit supported)")
    return width, height, maxval, pos


def decode_image(path):
    """Decode a P5/P6/FTEN file to a (C,H,W) float32 array of stored values."""
    blob = _read_file(path)
    if blob[:2] == b"P5":
        width, height, _, offset = _parse_pnm_header(blob, path)
        expected = width * height
        data = blob[offset : offset + expected]
        if len(data) < expected:
            raise DataError(f"{path}: short read, wanted {expected} pixel bytes, got {len(data)}")
        pixels = np.frombuffer(data, dtype=np.uint8).astype(np.float32)
        return pixels.reshape(1, height, width)
    if blob[:2] == b"P6":
        width, height, _, offset = _parse_pnm_header(blob, path)
        expected = 3 * width * height
        data = blob[offset : offset + expected]
        if len(data) < expected:
            raise DataError(f"{path}: short read, wanted {expected} pixel bytes, got {len(data)}")
        interleaved = np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3)
        return np.ascontiguousarray(interleaved.transpose(2, 0, 1)).astype(np.float32)
    if blob[:4] == FTEN_MAGIC:
        tensor = _decode_ften_blob(blob, path)
        if tensor.ndim == 2:
            return tensor[None, :, :]
        if tensor.ndim == 3:
            return tensor
        raise DataError(f"{path}: FTEN image must have rank 2 or 3, got rank {tensor.ndim}")
    raise DataError(f"{path}: unsupported magic {blob[:4]!r} (expected P5, P6, or FTEN)")


def encode_pgm(path, image):
    """Write a (H,W) or (1,H,W) array of integer values 0..255 as binary P5."""
    arr = np.asarray(image)
    if arr.ndim == 3 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 2:
        raise DataError(f"PGM wants a single-channel image, got shape {np.asarray(image).shape}")
    _check_byte_range(arr, path)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.astype(np.uint8).tobytes())


def encode_ppm(path, image):
    """Write a (3,H,W) array of integer values 0..255 as binary P6."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise DataError(f"PPM wants a (3,H,W) image, got shape {arr.shape}")
    _check_byte_range(arr, path)
    _, h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.transpose(1, 2, 0).astype(np.uint8).tobytes())


def _check_byte_range(arr, path):
    if arr.min() < 0 or arr.max() > 255 or not np.array_equal(arr, np.trunc(arr)):
        raise DataError(f"{path}: pixel values must be integers in [0,255]")


def encode_ften(path, tensor):
    """Write a float32 tensor: magic, version u8, rank u8, dims u32 LE, data LE."""
    arr = np.ascontiguousarray(tensor, dtype="<f4")
    if arr.ndim < 1 or arr.ndim > 255:
        raise DataError(f"FTEN rank must be 1..255, got {arr.ndim}")
    with open(path, "wb") as fh:
        fh.write(FTEN_MAGIC)
        fh.write(struct.pack("<BB", FTEN_VERSION, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def _decode_ften_blob(blob, path):
    if len(blob) < 6:
        raise DataError(f"{path}: short read in FTEN header")
    version, rank = struct.unpack_from("<BB", blob, 4)
    if version != FTEN_VERSION:
        raise DataError(f"{path}: unsupported FTEN version {version}")
    if rank < 1:
        raise DataError(f"{path}: FTEN rank must be >= 1")
    dims_end = 6 + 4 * rank
    if len(blob) < dims_end:
        raise DataError(f"{path}: short read in FTEN dimensions")
    dims = struct.unpack_from(f"<{rank}I", blob, 6)
    if any(d < 1 for d in dims):
        raise DataError(f"{path}: FTEN dimensions must be positive, got {dims}")
    count = math.prod(dims)
    data = blob[dims_end : dims_end + 4 * count]
    if len(data) < 4 * count:
        raise DataError(
            f"{path}: short read, wanted {4 * count} data bytes, got {len(data)}"
        )
    return np.frombuffer(data, dtype="<f4").reshape(dims).copy()


def decode_ften(path):
    """Read back a tensor written by :func:`encode_ften`."""
    return _decode_ften_blob(_read_file(path), path)


def normalize(raw):
    """Map stored values 0..255 to [0,1] by dividing by 255."""
    arr = np.asarray(raw, dtype=np.float32)
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise DataError(
            f"pixel values outside [0,255]: min {arr.min():g}, max {arr.max():g}"
        )
    return arr / np.float32(255.0)


def encode_label(name):
    """benign -> 0, malignant -> 1 (case-insensitive, closed set)."""
    lowered = name.strip().lower()
    if lowered not in CLASS_NAMES:
        raise DataError(f"unknown class {name!r}, expected one of {list(CLASS_NAMES)}")
    return CLASS_NAMES.index(lowered)


def smooth(image, kind):
    """3x3 mean/median denoising with replicate edges; ``none`` is identity."""
    if kind not in SMOOTHING_KINDS:
        raise DataError(f"unknown smoothing kind {kind!r}, expected one of {list(SMOOTHING_KINDS)}")
    arr = np.asarray(image, dtype=np.float32)
    if kind == "none":
        return arr.copy()
    if arr.ndim != 3:
        raise DataError(f"smoothing wants a (C,H,W) image, got shape {arr.shape}")
    _, h, w = arr.shape
    if h < 3 or w < 3:
        raise DataError(f"image {h}x{w} too small for a 3x3 filter")
    padded = np.pad(arr, ((0, 0), (1, 1), (1, 1)), mode="edge")
    windows = sliding_window_view(padded, (3, 3), axis=(1, 2))
    if kind == "mean3":
        # float64 accumulation keeps constant integer images exactly constant
        return windows.mean(axis=(3, 4), dtype=np.float64).astype(np.float32)
    return np.median(windows, axis=(3, 4)).astype(np.float32)


def resize_nearest(image, out_h, out_w):
    """Nearest-neighbor resize of a (C,H,W) image via floor index mapping."""
    arr = np.asarray(image)
    if arr.ndim != 3:
        raise DataError(f"resize wants a (C,H,W) image, got shape {arr.shape}")
    if out_h < 1 or out_w < 1:
        raise DataError(f"resize target must be positive, got {out_h}x{out_w}")
    _, h, w = arr.shape
    rows = (np.arange(out_h) * h) // out_h
    cols = (np.arange(out_w) * w) // out_w
    return np.ascontiguousarray(arr[:, rows[:, None], cols[None, :]])


@dataclass(frozen=True)
class SplitConfig:
    test_fraction: float = 0.20
    val_fraction: float = 0.10
    seed: int = 0

    def validate(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise DataError(f"test fraction must be in (0,1), got {self.test_fraction}")
        if not 0.0 < self.val_fraction < 1.0:
            raise DataError(f"validation fraction must be in (0,1), got {self.val_fraction}")


def split(n, config):
    """Partition range(n) into (train, validation, test) index lists.

    A seeded shuffle is cut into ``ceil(n * test_fraction)`` test samples,
    then ``floor(pool * val_fraction)`` validation samples of the remaining
    pool, then the training rest; each subset is returned sorted.
    """
    if isinstance(n, Manifest):
        n = len(n)
    config.validate()
    if n < 1:
        raise DataError("cannot split an empty manifest")
    n_test = math.ceil(n * config.test_fraction - 1e-9)
    pool = n - n_test
    n_val = math.floor(pool * config.val_fraction + 1e-9)
    n_train = pool - n_val
    if n_test < 1 or n_val < 1 or n_train < 1:
        raise DataError(
            f"split of {n} samples leaves an empty subset "
            f"(train {n_train}, validation {n_val}, test {n_test})"
        )
    perm = np.random.default_rng(config.seed).permutation(n)
    test = sorted(int(i) for i in perm[:n_test])
    val = sorted(int(i) for i in perm[n_test : n_test + n_val])
    train = sorted(int(i) for i in perm[n_test + n_val :])
    return train, val, test


def load_samples(manifest, indices, smoothing="none", input_shape=None):
    """Decode, smooth, normalize, and stack manifest rows into model inputs.

    Returns ``(images, labels, ids)`` with images (N,C,H,W) float32 in [0,1].
    When ``input_shape`` is given, images are nearest-neighbor resized to its
    (H,W) and must already have its channel count.
    """
    images, labels, ids = [], [], []
    for index in indices:
        record = manifest[index]
        raw = decode_image(manifest.resolve_path(record))
        raw = smooth(raw, smoothing)
        if input_shape is not None:
            c, h, w = input_shape
            if raw.shape[0] != c:
                raise DataError(
                    f"sample {record.sample_id!r} has {raw.shape[0]} channels, model wants {c}"
                )
            if raw.shape[1:] != (h, w):
                raw = resize_nearest(raw, h, w)
        images.append(normalize(raw))
        labels.append(encode_label(record.label))
        ids.append(record.sample_id)
    if not images:
        raise DataError("no samples selected")
    first = images[0].shape
    for img, record_id in zip(images, ids):
        if img.shape != first:
            raise DataError(
                f"sample {record_id!r} has shape {img.shape} but the first sample "
                f"has {first}; set a fixed input shape to resize"
            )
    return np.stack(images), np.asarray(labels, dtype=np.int64), ids
