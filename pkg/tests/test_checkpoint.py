import numpy as np
import pytest

from mrf.checkpoint import MAGIC, CheckpointError, load_checkpoint, save_checkpoint


def test_round_trip_preserves_values_and_order(tmp_path):
    rng = np.random.default_rng(5)
    params = {
        "encoder.conv0.w": rng.normal(size=(8, 3, 4)),
        "encoder.conv0.b": rng.normal(size=(8,)),
        "codebook": rng.normal(size=(16, 4)),
        "scalar": np.array(3.5),
    }
    path = tmp_path / "model.mrf1"
    save_checkpoint(path, params)
    loaded = load_checkpoint(path)
    assert list(loaded) == list(params)
    for k in params:
        assert np.array_equal(loaded[k], np.asarray(params[k], dtype=np.float64))


def test_magic_prefix(tmp_path):
    path = tmp_path / "m.mrf1"
    save_checkpoint(path, {"x": np.ones(2)})
    assert path.read_bytes()[:4] == MAGIC


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.mrf1"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(CheckpointError, match="bad magic"):
        load_checkpoint(path)


def test_truncated_file_rejected(tmp_path):
    path = tmp_path / "m.mrf1"
    save_checkpoint(path, {"x": np.ones((3, 3))})
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_payload_is_little_endian_float64(tmp_path):
    path = tmp_path / "m.mrf1"
    save_checkpoint(path, {"v": np.array([1.0, -2.0])})
    raw = path.read_bytes()
    # magic + len + name + rank + one dim, then payload
    off = 4 + 4 + 1 + 4 + 4
    vals = np.frombuffer(raw, dtype="<f8", count=2, offset=off)
    assert np.array_equal(vals, [1.0, -2.0])
