"""Self-describing binary checkpoints with bit-exact parameter round trips.

Layout, all integers little-endian:

    magic   4 bytes  b"LFCK"
    version u32
    spec    u32 byte length + UTF-8 canonical model-spec text
    seed    i64
    best epoch      u32
    best val loss   f64
    param count     u32
    per parameter:  u32 name length + UTF-8 name
                    u8 rank + u32 per dimension
                    raw little-endian float32 data, row-major
    crc     u32     CRC-32 of every preceding byte

Loading distinguishes failure modes by exception class: wrong magic or
trailing garbage -> :class:`FormatError`, unknown version ->
:class:`VersionError`, file ends early -> :class:`TruncatedError`, payload
bytes damaged -> :class:`ChecksumError`.  All derive from
:class:`CheckpointError`.
"""

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION",
    "CheckpointError",
    "FormatError",
    "VersionError",
    "TruncatedError",
    "ChecksumError",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_MAGIC = b"LFCK"
CHECKPOINT_VERSION = 1


class CheckpointError(Exception):
    """A checkpoint file could not be written or understood."""


class FormatError(CheckpointError):
    """Not a checkpoint file at all, or structurally malformed."""


class VersionError(CheckpointError):
    """Recognized file with an unsupported format version."""


class TruncatedError(CheckpointError):
    """The file ends before the declared structures do."""


class ChecksumError(CheckpointError):
    """Structure intact but the CRC-32 does not match the payload."""


@dataclass
class Checkpoint:
    """Model spec text plus named float32 parameter arrays and run metadata."""

    version: int
    spec_text: str
    params: dict
    seed: int
    best_epoch: int
    best_val_loss: float

    def build_model(self):
        """Reconstruct a Model carrying exactly these parameters."""
        from .models import Model, ModelSpec

        spec = ModelSpec.from_text(self.spec_text)
        model = Model(spec, self.seed)
        have = set(model.parameters())
        want = set(self.params)
        if have != want:
            missing = sorted(want - have)
            extra = sorted(have - want)
            raise CheckpointError(
                f"checkpoint parameters do not match the spec: missing {missing}, "
                f"unexpected {extra}"
            )
        for name, tensor in model.parameters().items():
            stored = self.params[name]
            if stored.shape != tensor.data.shape:
                raise CheckpointError(
                    f"parameter {name!r} has shape {stored.shape} in the checkpoint "
                    f"but {tensor.data.shape} in the spec"
                )
            tensor.data[...] = stored
        return model

    def to_bytes(self):
        spec_bytes = self.spec_text.encode("utf-8")
        chunks = [
            CHECKPOINT_MAGIC,
            struct.pack("<I", self.version),
            struct.pack("<I", len(spec_bytes)),
            spec_bytes,
            struct.pack("<qId", self.seed, self.best_epoch, self.best_val_loss),
            struct.pack("<I", len(self.params)),
        ]
        for name, array in self.params.items():
            arr = np.ascontiguousarray(array, dtype="<f4")
            name_bytes = name.encode("utf-8")
            chunks.append(struct.pack("<I", len(name_bytes)))
            chunks.append(name_bytes)
            chunks.append(struct.pack("<B", arr.ndim))
            chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
            chunks.append(arr.tobytes())
        payload = b"".join(chunks)
        return payload + struct.pack("<I", zlib.crc32(payload))


class _Cursor:
    def __init__(self, blob):
        self.blob = blob
        self.pos = 0

    def take(self, count, what):
        if self.pos + count > len(self.blob):
            raise TruncatedError(
                f"file ends inside {what}: wanted {count} bytes at offset {self.pos}, "
                f"only {len(self.blob) - self.pos} left"
            )
        piece = self.blob[self.pos : self.pos + count]
        self.pos += count
        return piece

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def _parse(blob):
    cursor = _Cursor(blob)
    magic = cursor.take(4, "magic")
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
    (version,) = cursor.unpack("<I", "version")
    if version != CHECKPOINT_VERSION:
        raise VersionError(
            f"unsupported checkpoint version {version}, this build reads {CHECKPOINT_VERSION}"
        )
    (spec_len,) = cursor.unpack("<I", "spec length")
    spec_text = cursor.take(spec_len, "spec text").decode("utf-8")
    seed, best_epoch, best_val_loss = cursor.unpack("<qId", "metadata")
    (param_count,) = cursor.unpack("<I", "parameter count")
    params = {}
    for i in range(param_count):
        what = f"parameter {i}"
        (name_len,) = cursor.unpack("<I", f"{what} name length")
        name = cursor.take(name_len, f"{what} name").decode("utf-8")
        (rank,) = cursor.unpack("<B", f"{name} rank")
        shape = cursor.unpack(f"<{rank}I", f"{name} shape") if rank else ()
        count = int(np.prod(shape, dtype=np.int64)) if rank else 1
        data = cursor.take(4 * count, f"{name} data")
        if name in params:
            raise FormatError(f"duplicate parameter {name!r}")
        params[name] = np.frombuffer(data, dtype="<f4").reshape(shape).copy()
    crc_offset = cursor.pos
    (stored_crc,) = cursor.unpack("<I", "checksum")
    if cursor.pos != len(blob):
        raise FormatError(f"{len(blob) - cursor.pos} trailing bytes after the checksum")
    actual = zlib.crc32(blob[:crc_offset])
    if actual != stored_crc:
        raise ChecksumError(
            f"checksum mismatch: file says {stored_crc:#010x}, payload is {actual:#010x}"
        )
    return Checkpoint(
        version=version,
        spec_text=spec_text,
        params=params,
        seed=seed,
        best_epoch=best_epoch,
        best_val_loss=best_val_loss,
    )


def save_checkpoint(checkpoint, path):
    Path(path).write_bytes(checkpoint.to_bytes())


def load_checkpoint(path):
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    return _parse(path.read_bytes())
