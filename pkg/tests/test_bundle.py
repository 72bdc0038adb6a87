"""Bundle serialization, header validation, pair sampling."""

import numpy as np
import pytest

from latentdelta.bundle import (Bundle, BundleFormatError, LevelPartition,
                                concat_bundles, make_bundle, read_bundle,
                                sample_pairs, write_bundle)


def small_bundle(n=3, d_i=8, d_s=6, seed=0):
    rng = np.random.default_rng(seed)
    return make_bundle(rng.normal(size=(n, d_i)), rng.normal(size=(n, d_s)),
                       LevelPartition(2, 4, d_s),
                       manifest={"source": "test", "captions": ["a"] * n})


def test_roundtrip_is_byte_identical(tmp_path):
    bundle = small_bundle()
    p1, p2 = tmp_path / "a.dlsp", tmp_path / "b.dlsp"
    write_bundle(bundle, p1)
    write_bundle(read_bundle(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert (tmp_path / "a.dlsp.json").exists()


def test_roundtrip_preserves_values_at_float32(tmp_path):
    bundle = small_bundle()
    path = tmp_path / "b.dlsp"
    write_bundle(bundle, path)
    back = read_bundle(path)
    np.testing.assert_array_equal(back.clips(),
                                  bundle.clips().astype(np.float32).astype(np.float64))
    assert back.partition == bundle.partition
    assert [r.id for r in back.records] == [r.id for r in bundle.records]
    assert back.manifest["source"] == "test"


def test_truncated_payload_reports_offset(tmp_path):
    bundle = small_bundle(n=10)
    path = tmp_path / "b.dlsp"
    write_bundle(bundle, path)
    raw = path.read_bytes()
    stride = 4 * (8 + 6)
    path.write_bytes(raw[:len(raw) - stride])  # drop the last record
    (tmp_path / "b.dlsp.json").unlink()
    with pytest.raises(BundleFormatError, match="9 of 10") as exc:
        read_bundle(path)
    assert exc.value.offset == len(raw) - stride


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "b.dlsp"
    write_bundle(small_bundle(), path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"NOPE"
    path.write_bytes(bytes(raw))
    with pytest.raises(BundleFormatError, match="magic"):
        read_bundle(path)


def test_nan_payload_reports_byte_offset(tmp_path):
    path = tmp_path / "b.dlsp"
    write_bundle(small_bundle(), path)
    raw = bytearray(path.read_bytes())
    header = 28
    stride = 4 * (8 + 6)
    corrupt_at = header + stride + 4 * 3  # record 1, element 3
    raw[corrupt_at:corrupt_at + 4] = np.array([np.nan], "<f4").tobytes()
    path.write_bytes(bytes(raw))
    (tmp_path / "b.dlsp.json").unlink()
    with pytest.raises(BundleFormatError, match="non-finite") as exc:
        read_bundle(path)
    assert exc.value.offset == corrupt_at


def test_partition_must_be_increasing_and_nonempty():
    with pytest.raises(ValueError):
        LevelPartition(0, 4, 6)
    with pytest.raises(ValueError):
        LevelPartition(4, 4, 6)
    with pytest.raises(ValueError):
        LevelPartition(2, 6, 6)
    widths = LevelPartition(32, 64, 96).widths()
    assert widths == {"coarse": 32, "medium": 32, "fine": 32}


def test_zero_clip_vector_rejected():
    clips = np.ones((3, 4))
    clips[1] = 0.0
    with pytest.raises(ValueError, match="zero clip"):
        make_bundle(clips, np.ones((3, 6)), LevelPartition(2, 4, 6))


def test_concat_bundles_stacks_records():
    a, b = small_bundle(n=3, seed=0), small_bundle(n=5, seed=1)
    merged = concat_bundles(a, b)
    assert len(merged) == 8
    np.testing.assert_array_equal(merged.clips()[:3], a.clips())
    np.testing.assert_array_equal(merged.clips()[3:], b.clips())


def test_two_record_bundle_yields_only_the_two_ordered_pairs():
    bundle = small_bundle(n=2)
    pairs = {(p[0].id, p[1].id) for p in sample_pairs(bundle, 200, seed=3)}
    assert pairs == {("rec000000", "rec000001"), ("rec000001", "rec000000")}


def test_pair_sampling_is_deterministic_per_seed():
    bundle = small_bundle(n=7)
    ids = lambda ps: [(a.id, b.id) for a, b in ps]
    assert ids(sample_pairs(bundle, 50, seed=5)) == ids(sample_pairs(bundle, 50, seed=5))
    assert ids(sample_pairs(bundle, 50, seed=5)) != ids(sample_pairs(bundle, 50, seed=6))


def test_pair_sampling_never_repeats_a_record_within_a_pair():
    bundle = small_bundle(n=5)
    assert all(a.id != b.id for a, b in sample_pairs(bundle, 2000, seed=1))


def test_pair_frequencies_uniform_within_3_sigma():
    # Monte Carlo check over all 90 ordered pairs of a 10-record bundle
    bundle = small_bundle(n=10)
    total = 100_000
    counts = {}
    for a, b in sample_pairs(bundle, total, seed=12):
        counts[(a.id, b.id)] = counts.get((a.id, b.id), 0) + 1
    assert len(counts) == 90
    p = 1 / 90
    sigma = np.sqrt(total * p * (1 - p))
    for pair, c in counts.items():
        assert abs(c - total * p) < 3 * sigma, (pair, c)


def test_sampling_requires_two_records():
    bundle = small_bundle(n=3)
    bundle.records = bundle.records[:1]
    with pytest.raises(ValueError, match="at least 2"):
        sample_pairs(bundle, 5, seed=0)
