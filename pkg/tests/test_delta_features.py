"""Delta construction, alignment reporting, CSV export."""

import csv

import numpy as np
import pytest

from latentdelta.bundle import sample_pairs
from latentdelta.delta_features import (alignment_report, export_csv, make_delta,
                                    unit_normalize)
from latentdelta.synthetic import paired_world
from oracles import cosine_rows, unit_rows


def test_equal_endpoints_give_zero_delta():
    v = np.array([3.0, 4.0])
    cond = make_delta(v, v)
    np.testing.assert_array_equal(cond.delta, np.zeros(2))
    np.testing.assert_allclose(cond.anchor, [0.6, 0.8])


def test_hand_computed_axis_delta():
    cond = make_delta(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    np.testing.assert_array_equal(cond.anchor, [1.0, 0.0])
    np.testing.assert_array_equal(cond.delta, [-1.0, 1.0])


def test_delta_invariant_to_input_rescaling():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=5), rng.normal(size=5)
    base = make_delta(a, b)
    scaled = make_delta(7.3 * a, 0.002 * b)
    np.testing.assert_allclose(scaled.anchor, base.anchor, atol=1e-12)
    np.testing.assert_allclose(scaled.delta, base.delta, atol=1e-12)


def test_delta_antisymmetry():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a, b = rng.normal(size=8), rng.normal(size=8)
        np.testing.assert_array_equal(make_delta(a, b).delta,
                                      -make_delta(b, a).delta)


def test_zero_vector_rejected():
    with pytest.raises(ValueError, match="zero"):
        make_delta(np.zeros(3), np.ones(3))


def test_anchor_unit_norm_enforced():
    from latentdelta.delta_features import DeltaCondition
    with pytest.raises(ValueError, match="unit"):
        DeltaCondition(anchor=np.array([1.0, 1.0]), delta=np.zeros(2))


def test_report_on_identical_lists():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(10, 6))
    rep = alignment_report(a, a.copy())
    assert rep.mean_cosine == pytest.approx(1.0)
    assert rep.modality_gap == pytest.approx(0.0)
    assert rep.count == 10


def test_report_on_negated_lists():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(8, 5))
    rep = alignment_report(a, -a)
    assert rep.mean_cosine == pytest.approx(-1.0)


def test_report_scale_invariance_argwise():
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=(12, 6)), rng.normal(size=(12, 6))
    scales = rng.uniform(0.1, 50.0, size=(12, 1))
    base = alignment_report(a, b)
    for rescaled in (alignment_report(scales * a, b),
                     alignment_report(a, scales * b)):
        for field in ("mean_cosine", "median_cosine", "std_cosine",
                      "modality_gap", "count"):
            assert getattr(rescaled, field) == pytest.approx(
                getattr(base, field), abs=1e-12), field


def test_report_rejects_empty_and_mismatched():
    with pytest.raises(ValueError, match="empty"):
        alignment_report(np.zeros((0, 3)), np.zeros((0, 3)))
    with pytest.raises(ValueError, match="disagree"):
        alignment_report(np.ones((2, 3)), np.ones((3, 3)))


def test_synthetic_world_separation_matches_direct_recomputation():
    world = paired_world(400, seed=7)
    images = world.bundle.clips()
    texts = world.texts

    # independent recomputation of both statistics with plain numpy
    raw_cos = cosine_rows(images, texts)
    pairs = sample_pairs(world.bundle, 500, seed=8)
    idx = {r.id: i for i, r in enumerate(world.bundle.records)}
    d_img, d_txt = [], []
    for a, b in pairs:
        i, j = idx[a.id], idx[b.id]
        d_img.append(unit_rows(images[j]) - unit_rows(images[i]))
        d_txt.append(unit_rows(texts[j]) - unit_rows(texts[i]))
    delta_cos = cosine_rows(np.array(d_img), np.array(d_txt))

    raw_report = alignment_report(images, texts)
    delta_report = alignment_report(np.array(d_img), np.array(d_txt))
    assert raw_report.mean_cosine == pytest.approx(float(raw_cos.mean()), abs=1e-12)
    assert delta_report.mean_cosine == pytest.approx(float(delta_cos.mean()), abs=1e-12)

    # the separation claim itself: aligned deltas, gapped raw modalities
    assert delta_report.mean_cosine > 0.9
    assert raw_report.mean_cosine < 0.5
    assert delta_report.mean_cosine - raw_report.mean_cosine > 0.4
    assert raw_report.modality_gap > 5 * delta_report.modality_gap


def test_csv_export_shape_and_roundtrip(tmp_path):
    path = tmp_path / "points.csv"
    export_csv(np.array([[1.25, -2.5], [0.1, 1e-7]]), ["a", "b"], path)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == 3
    assert lines[0] == "label,dim_0,dim_1"
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    parsed = np.array([[float(r["dim_0"]), float(r["dim_1"])] for r in rows])
    np.testing.assert_allclose(parsed, [[1.25, -2.5], [0.1, 1e-7]], rtol=1e-7)


def test_csv_export_of_bundle_deltas_matches_make_delta(tmp_path):
    world = paired_world(20, seed=5)
    pairs = sample_pairs(world.bundle, 15, seed=6)
    deltas = [make_delta(a.clip, b.clip).delta for a, b in pairs]
    path = tmp_path / "deltas.csv"
    export_csv(np.array(deltas), [f"p{i}" for i in range(15)], path)
    with open(path) as fh:
        rows = list(fh)[1:]
    assert len(rows) == 15
    for row, delta in zip(rows, deltas):
        values = np.array([float(v) for v in row.strip().split(",")[1:]])
        np.testing.assert_allclose(values, delta, atol=1e-7)


def test_unit_normalize_handles_batches():
    rng = np.random.default_rng(9)
    rows = rng.normal(size=(4, 3))
    np.testing.assert_allclose(np.linalg.norm(unit_normalize(rows), axis=1),
                               np.ones(4))
