import os
import struct

import numpy as np
import pytest

from motionforge.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from motionforge.errors import ContractError


def test_round_trip(tmp_path, rng):
    params = {
        "blocks.0/attn/wq/weight": rng.standard_normal((4, 4)).astype(np.float32),
        "scalar": np.asarray(3.5, dtype=np.float32),
        "bias": np.zeros(7, dtype=np.float32),
    }
    path = str(tmp_path / "model.ckpt")
    save_checkpoint(params, path)
    loaded = load_checkpoint(path)
    assert list(loaded) == list(params)
    for name in params:
        np.testing.assert_array_equal(loaded[name], params[name])
        assert loaded[name].dtype == np.float32


def test_header_layout(tmp_path):
    path = str(tmp_path / "one.ckpt")
    save_checkpoint({"w": np.asarray([1.0, 2.0], dtype=np.float32)}, path)
    with open(path, "rb") as fh:
        blob = fh.read()
    assert blob[:7] == MAGIC
    assert struct.unpack("<I", blob[7:11])[0] == 1
    name_len = struct.unpack("<I", blob[11:15])[0]
    assert blob[15:15 + name_len] == b"w"


def test_bad_magic_rejected(tmp_path):
    path = str(tmp_path / "junk.ckpt")
    with open(path, "wb") as fh:
        fh.write(b"NOTCKPT" + b"\x00" * 16)
    with pytest.raises(ContractError, match="magic"):
        load_checkpoint(path)


def test_write_is_atomic(tmp_path):
    path = str(tmp_path / "a.ckpt")
    save_checkpoint({"x": np.ones(3, dtype=np.float32)}, path)
    save_checkpoint({"x": np.zeros(3, dtype=np.float32)}, path)
    leftovers = [f for f in os.listdir(tmp_path) if f.startswith(".ckpt-")]
    assert leftovers == []
    np.testing.assert_array_equal(load_checkpoint(path)["x"], np.zeros(3))


def test_byte_identical_across_runs(tmp_path, rng):
    params = {"a": rng.standard_normal(5).astype(np.float32)}
    p1, p2 = str(tmp_path / "1.ckpt"), str(tmp_path / "2.ckpt")
    save_checkpoint(params, p1)
    save_checkpoint(params, p2)
    assert open(p1, "rb").read() == open(p2, "rb").read()
