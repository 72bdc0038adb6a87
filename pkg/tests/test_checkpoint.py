"""Checkpoint container and raw blob helpers."""

import numpy as np
import pytest

from latentdelta.checkpoint import (CheckpointError, load_params, load_raw,
                                    save_params, save_raw)


def test_container_roundtrip_at_float32(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {"layer0.w": rng.normal(size=(4, 3)), "layer0.b": rng.normal(size=3),
              "head": rng.normal(size=(3, 2))}
    path = tmp_path / "ck.dlcp"
    save_params(path, arrays, kind="mapper-params", meta={"clip_dim": 8})
    kind, back, meta = load_params(path)
    assert kind == "mapper-params"
    assert meta == {"clip_dim": 8}
    assert list(back) == list(arrays)
    for name in arrays:
        np.testing.assert_array_equal(
            back[name], arrays[name].astype(np.float32).astype(np.float64))


def test_container_rewrite_is_byte_identical(tmp_path):
    arrays = {"w": np.arange(6.0).reshape(2, 3)}
    p1, p2 = tmp_path / "a", tmp_path / "b"
    save_params(p1, arrays, kind="params")
    _, back, meta = load_params(p1)
    save_params(p2, back, kind="params", meta=meta)
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic_and_truncation(tmp_path):
    path = tmp_path / "ck"
    save_params(path, {"w": np.ones(4)}, kind="params")
    raw = path.read_bytes()
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(CheckpointError, match="magic"):
        load_params(path)
    path.write_bytes(raw[:-4])
    with pytest.raises(CheckpointError, match="truncated"):
        load_params(path)
    path.write_bytes(raw + b"\x00\x00\x00\x00")
    with pytest.raises(CheckpointError, match="trailing"):
        load_params(path)


def test_nonfinite_payload_rejected_with_offset(tmp_path):
    path = tmp_path / "ck"
    save_params(path, {"w": np.ones(4)}, kind="params")
    raw = bytearray(path.read_bytes())
    payload_start = len(raw) - 16
    corrupt = payload_start + 8  # third float of "w"
    raw[corrupt:corrupt + 4] = np.array([np.inf], "<f4").tobytes()
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="non-finite") as exc:
        load_params(path)
    assert exc.value.offset == corrupt


def test_raw_blob_roundtrip_and_validation(tmp_path):
    path = tmp_path / "rows.f32"
    rows = np.random.default_rng(1).normal(size=(5, 7))
    save_raw(path, rows)
    back = load_raw(path, columns=7)
    np.testing.assert_array_equal(back, rows.astype(np.float32).astype(np.float64))
    with pytest.raises(CheckpointError, match="divisible"):
        load_raw(path, columns=4)
    save_raw(path, np.array([1.0, np.nan]))
    with pytest.raises(CheckpointError, match="non-finite"):
        load_raw(path)
