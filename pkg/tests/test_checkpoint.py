"""Checkpoint wire format: bit-exact round trips and corruption handling."""

import struct
import zlib

import numpy as np
import numpy.testing as npt
import pytest

from lesionfuse.checkpoint import (
    CHECKPOINT_VERSION,
    Checkpoint,
    ChecksumError,
    CheckpointError,
    FormatError,
    TruncatedError,
    VersionError,
    load_checkpoint,
    save_checkpoint,
)
from lesionfuse.models import build_model, default_densenet_spec


def make_checkpoint(seed=17):
    model = build_model(default_densenet_spec(), seed=seed)
    return model, Checkpoint(
        version=CHECKPOINT_VERSION,
        spec_text=model.spec.to_text(),
        params={name: p.data.copy() for name, p in model.parameters().items()},
        seed=seed,
        best_epoch=4,
        best_val_loss=0.123456789,
    )


class TestRoundTrip:
    def test_bytes_round_trip_bit_exact(self, tmp_path):
        _, ckpt = make_checkpoint()
        path = tmp_path / "model.ckpt"
        save_checkpoint(ckpt, path)
        loaded = load_checkpoint(path)
        assert loaded.version == ckpt.version
        assert loaded.spec_text == ckpt.spec_text
        assert loaded.seed == ckpt.seed
        assert loaded.best_epoch == ckpt.best_epoch
        assert loaded.best_val_loss == ckpt.best_val_loss
        assert sorted(loaded.params) == sorted(ckpt.params)
        for name, arr in ckpt.params.items():
            assert loaded.params[name].tobytes() == arr.tobytes()

    def test_save_load_save_identical_bytes(self, tmp_path):
        _, ckpt = make_checkpoint()
        path = tmp_path / "model.ckpt"
        save_checkpoint(ckpt, path)
        blob = path.read_bytes()
        save_checkpoint(load_checkpoint(path), path)
        assert path.read_bytes() == blob

    def test_loaded_model_scores_identical(self, tmp_path):
        model, ckpt = make_checkpoint()
        path = tmp_path / "model.ckpt"
        save_checkpoint(ckpt, path)
        restored = load_checkpoint(path).build_model()
        batch = np.random.default_rng(0).random((5, 1, 8, 8), dtype=np.float32)
        npt.assert_array_equal(restored.scores(batch), model.scores(batch))


class TestCorruption:
    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="not found"):
            load_checkpoint(tmp_path / "nope.ckpt")

    def test_bad_magic(self, tmp_path):
        _, ckpt = make_checkpoint()
        blob = bytearray(ckpt.to_bytes())
        blob[:4] = b"ZIPF"
        path = tmp_path / "bad.ckpt"
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError, match="magic"):
            load_checkpoint(path)

    def test_unsupported_version(self, tmp_path):
        """A structurally valid file from a future version is a VersionError."""
        _, ckpt = make_checkpoint()
        payload = bytearray(ckpt.to_bytes()[:-4])
        payload[4:8] = struct.pack("<I", 99)
        blob = bytes(payload) + struct.pack("<I", zlib.crc32(bytes(payload)))
        path = tmp_path / "future.ckpt"
        path.write_bytes(blob)
        with pytest.raises(VersionError, match="99"):
            load_checkpoint(path)

    def test_truncated_file(self, tmp_path):
        _, ckpt = make_checkpoint()
        blob = ckpt.to_bytes()
        path = tmp_path / "cut.ckpt"
        for cut in (3, 6, len(blob) // 2, len(blob) - 10):
            path.write_bytes(blob[:cut])
            with pytest.raises(TruncatedError):
                load_checkpoint(path)

    def test_flipped_payload_byte(self, tmp_path):
        _, ckpt = make_checkpoint()
        blob = bytearray(ckpt.to_bytes())
        blob[-6] ^= 0xFF  # inside the last parameter's float data
        path = tmp_path / "flip.ckpt"
        path.write_bytes(bytes(blob))
        with pytest.raises(ChecksumError, match="mismatch"):
            load_checkpoint(path)

    def test_trailing_garbage(self, tmp_path):
        _, ckpt = make_checkpoint()
        path = tmp_path / "long.ckpt"
        path.write_bytes(ckpt.to_bytes() + b"extra")
        with pytest.raises(FormatError, match="trailing"):
            load_checkpoint(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.ckpt"
        path.write_bytes(b"")
        with pytest.raises(TruncatedError):
            load_checkpoint(path)


class TestBuildModel:
    def test_parameter_set_mismatch_rejected(self):
        _, ckpt = make_checkpoint()
        ckpt.params["ghost.weights"] = np.zeros(3, dtype=np.float32)
        with pytest.raises(CheckpointError, match="ghost.weights"):
            ckpt.build_model()

    def test_parameter_shape_mismatch_rejected(self):
        _, ckpt = make_checkpoint()
        ckpt.params["stem.bias"] = np.zeros(99, dtype=np.float32)
        with pytest.raises(CheckpointError, match="stem.bias"):
            ckpt.build_model()
