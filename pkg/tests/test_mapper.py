"""Direction mapper: architecture contracts, loss, training, editing."""

import numpy as np
import pytest

from latentdelta import autodiff as ad
from latentdelta.bundle import LevelPartition, pair_index_stream
from latentdelta.delta_features import make_delta, unit_normalize
from latentdelta.mapper import (DirectionMapper, TrainConfig, baseline_forward,
                                edit, mapper_forward, train)
from latentdelta.synthetic import constant_style_world, linear_world
from oracles import gradient_gap

SMALL = dict(clip_dim=6, partition=LevelPartition(3, 6, 9), hidden=8)


def small_mapper(seed=0, mode="delta"):
    return DirectionMapper(condition_mode=mode, seed=seed, **SMALL)


def random_inputs(mapper, rng, batch=1):
    styles = rng.normal(size=(batch, mapper.partition.dim))
    anchors = unit_normalize(rng.normal(size=(batch, mapper.clip_dim)))
    deltas = unit_normalize(rng.normal(size=(batch, mapper.clip_dim))) - anchors
    return styles, mapper.condition_rows(anchors, deltas)


def straightline_forward(mapper, style_row, cond_row):
    """Independent re-evaluation of the documented layer stack in plain numpy."""
    arrs = mapper.params.arrays()

    def mlp(prefix, x):
        h = x
        for i in range(4):
            h = h @ arrs[f"{prefix}.l{i}.w"] + arrs[f"{prefix}.l{i}.b"]
            if i < 3:
                h = np.where(h > 0, h, 0.2 * h)
        return h

    pieces = []
    for level, sl in mapper.partition.slices().items():
        e_s = mlp(f"style.{level}", style_row[sl])
        e_i = mlp(f"cond.{level}", cond_row)
        pieces.append(mlp(f"fusion.{level}", np.concatenate([e_i, e_s])))
    return np.concatenate(pieces)


def test_zero_parameters_give_zero_direction():
    mapper = small_mapper()
    for name in mapper.params.names():
        mapper.params[name].value[:] = 0.0
    styles, conds = random_inputs(mapper, np.random.default_rng(0))
    np.testing.assert_array_equal(mapper.predict(styles, conds), np.zeros((1, 9)))


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_level_locality_of_style_input(seed):
    # perturbing only the medium style slice may change only the medium output
    mapper = small_mapper(seed=seed)
    rng = np.random.default_rng(seed + 100)
    styles, conds = random_inputs(mapper, rng)
    base = mapper.predict(styles, conds)
    bumped = styles.copy()
    bumped[0, 3:6] += rng.normal(size=3)
    out = mapper.predict(bumped, conds)
    sl = mapper.partition.slices()
    assert np.array_equal(out[0, sl["coarse"]], base[0, sl["coarse"]])
    assert np.array_equal(out[0, sl["fine"]], base[0, sl["fine"]])
    assert not np.array_equal(out[0, sl["medium"]], base[0, sl["medium"]])


def test_forward_matches_straightline_reimplementation():
    rng = np.random.default_rng(42)
    mapper = small_mapper(seed=7)
    styles, conds = random_inputs(mapper, rng, batch=3)
    got = mapper.predict(styles, conds)
    for row in range(3):
        expected = straightline_forward(mapper, styles[row], conds[row])
        np.testing.assert_allclose(got[row], expected, atol=1e-12)


def test_loss_total_is_exact_sum_of_terms():
    mapper = small_mapper(seed=3)
    rng = np.random.default_rng(5)
    styles, conds = random_inputs(mapper, rng, batch=4)
    targets = rng.normal(size=(4, 9))
    loss = mapper.loss(styles, conds, targets)
    assert loss.total == loss.rec + loss.sim
    assert loss.rec >= 0
    assert 0 <= loss.sim <= 2


def test_cosine_term_scale_invariant_but_rec_term_not():
    rng = np.random.default_rng(6)
    pred, target = rng.normal(size=(3, 5)), rng.normal(size=(3, 5))
    def terms(p):
        a, t = ad.const(p), ad.const(target)
        rec, sim = ad.l2_distance(a, t), ad.cosine_loss(a, t)
        return float(ad.forward(rec)), float(ad.forward(sim))
    rec1, sim1 = terms(pred)
    rec2, sim2 = terms(3.7 * pred)
    assert sim2 == pytest.approx(sim1, abs=1e-12)
    assert rec2 != pytest.approx(rec1, abs=1e-6)


def test_loss_gradient_matches_finite_differences():
    mapper = DirectionMapper(clip_dim=4, partition=LevelPartition(2, 4, 6),
                             hidden=4, seed=11)
    rng = np.random.default_rng(12)
    styles = rng.normal(size=(2, 6))
    anchors = unit_normalize(rng.normal(size=(2, 4)))
    deltas = unit_normalize(rng.normal(size=(2, 4))) - anchors
    conds = mapper.condition_rows(anchors, deltas)
    targets = rng.normal(size=(2, 6))
    bindings = {"style": styles, "cond": conds, "target": targets}
    params = [mapper.params[name] for name in mapper.params.names()]
    gap = gradient_gap(mapper.total_node, params, bindings=bindings)
    assert gap < 1e-4, f"rel err {gap:.3e}"


def test_baseline_condition_keeps_target_half_constant():
    mapper = small_mapper(mode="target")
    rng = np.random.default_rng(9)
    anchors = unit_normalize(rng.normal(size=(5, 6)))
    target = rng.normal(size=6)
    conds = mapper.condition_rows(anchors, np.tile(target, (5, 1)))
    assert np.ptp(conds[:, 6:], axis=0).max() == 0.0  # identical rows
    assert np.ptp(conds[:, :6], axis=0).max() > 0.0


def test_mode_guards():
    with pytest.raises(ValueError, match="delta-conditioned"):
        mapper_forward(small_mapper(mode="target"), np.zeros(9),
                       make_delta(np.ones(6), np.ones(6)))
    with pytest.raises(ValueError, match="target-conditioned"):
        baseline_forward(small_mapper(), np.zeros(9), np.ones(6), np.ones(6))
    with pytest.raises(ValueError, match="condition mode"):
        DirectionMapper(condition_mode="weird", **SMALL)


def test_save_load_roundtrip_preserves_predictions(tmp_path):
    mapper = small_mapper(seed=21)
    styles, conds = random_inputs(mapper, np.random.default_rng(2), batch=2)
    before = mapper.predict(styles, conds)
    path = tmp_path / "mapper.dlcp"
    mapper.save(path)
    loaded = DirectionMapper.load(path)
    assert loaded.condition_mode == "delta"
    after = loaded.predict(styles, conds)
    np.testing.assert_allclose(after, before.astype(np.float32), atol=2e-6)


def test_training_is_bit_deterministic(tmp_path):
    world = linear_world(60, clip_dim=8, style_dim=9, partition=(3, 6), seed=1)
    cfg = TrainConfig(steps=12, batch_size=8, hidden=8, eval_interval=6)
    m1, log1 = train(world.bundle, cfg, seed=5)
    m2, log2 = train(world.bundle, cfg, seed=5)
    assert log1 == log2
    for name in m1.params.names():
        assert m1.params[name].value.tobytes() == m2.params[name].value.tobytes()


def test_initial_loss_matches_independent_recomputation():
    world = linear_world(40, clip_dim=8, style_dim=9, partition=(3, 6), seed=2)
    cfg = TrainConfig(steps=0, batch_size=16, hidden=8, heldout_fraction=0.1)
    mapper, log = train(world.bundle, cfg, seed=9)

    # rebuild the first training batch with the documented seeding scheme
    seeds = np.random.SeedSequence(9).spawn(3)
    order = np.random.default_rng(int(seeds[1].generate_state(1)[0])).permutation(40)
    train_idx = order[4:]
    stream = pair_index_stream(len(train_idx), int(seeds[2].generate_state(1)[0]))
    pairs = [next(stream) for _ in range(16)]
    ia, ib = train_idx[[p[0] for p in pairs]], train_idx[[p[1] for p in pairs]]

    clips, styles = world.bundle.clips(), world.bundle.styles()
    anchors = unit_normalize(clips[ia])
    conds = np.concatenate([unit_normalize(clips[ib]) - anchors, anchors], axis=1)
    targets = styles[ib] - styles[ia]
    pred = np.stack([straightline_forward(mapper, styles[i], conds[k])
                     for k, i in enumerate(ia)])
    rec = np.linalg.norm(pred - targets, axis=1).mean()
    cos = (pred * targets).sum(1) / (np.linalg.norm(pred, axis=1)
                                     * np.linalg.norm(targets, axis=1))
    sim = (1 - cos).mean()
    assert log[0]["rec"] == pytest.approx(rec, rel=1e-12)
    assert log[0]["sim"] == pytest.approx(sim, rel=1e-12)
    assert log[0]["total"] == pytest.approx(rec + sim, rel=1e-12)


def test_training_on_constant_styles_drives_directions_to_zero():
    bundle = constant_style_world(50, clip_dim=8, style_dim=9, partition=(3, 6),
                                  seed=3)
    cfg = TrainConfig(steps=400, batch_size=16, hidden=8, learning_rate=3e-3,
                      eval_interval=100, heldout_fraction=0.0)
    mapper, _ = train(bundle, cfg, seed=4)
    rng = np.random.default_rng(8)
    clips = bundle.clips()
    norms = []
    for _ in range(32):
        i, j = rng.integers(0, 50, size=2)
        cond = make_delta(clips[i], clips[j])
        norms.append(np.linalg.norm(mapper_forward(mapper, bundle.styles()[i], cond)))
    assert np.mean(norms) < 1e-2


def test_zero_delta_edit_is_near_identity_after_zero_training():
    bundle = constant_style_world(50, clip_dim=8, style_dim=9, partition=(3, 6),
                                  seed=3)
    cfg = TrainConfig(steps=400, batch_size=16, hidden=8, learning_rate=3e-3,
                      eval_interval=100, heldout_fraction=0.0)
    mapper, _ = train(bundle, cfg, seed=4)
    rng = np.random.default_rng(13)
    s = bundle.styles()[7]          # edit an in-distribution item
    i_emb = bundle.clips()[7]
    text = rng.normal(size=8)       # source == target, so the delta is zero
    outcome = edit(mapper, s, i_emb, text, text)
    assert np.linalg.norm(outcome.direction) < 1e-2
    np.testing.assert_allclose(outcome.edited, s, atol=1e-2)


def test_edit_mask_extremes():
    mapper = small_mapper(seed=30)
    rng = np.random.default_rng(14)
    s = rng.normal(size=9)
    i_emb = rng.normal(size=6)
    src, tgt = rng.normal(size=6), rng.normal(size=6)
    plain = edit(mapper, s, i_emb, src, tgt)
    ones = edit(mapper, s, i_emb, src, tgt, mask=np.ones(9))
    np.testing.assert_array_equal(ones.edited, plain.edited)
    zeros = edit(mapper, s, i_emb, src, tgt, mask=np.zeros(9))
    np.testing.assert_array_equal(zeros.edited, s)
    partial = edit(mapper, s, i_emb, src, tgt, mask=np.array([1, 0, 1, 0, 1, 0, 1, 0, 1.0]))
    masked = np.array([1, 3, 5, 7])
    np.testing.assert_array_equal(partial.edited[masked], s[masked])
    with pytest.raises(ValueError, match="mask dim"):
        edit(mapper, s, i_emb, src, tgt, mask=np.ones(5))


def test_edit_debug_strength_rescales_direction():
    mapper = small_mapper(seed=31)
    rng = np.random.default_rng(15)
    s, i_emb = rng.normal(size=9), rng.normal(size=6)
    src, tgt = rng.normal(size=6), rng.normal(size=6)
    base = edit(mapper, s, i_emb, src, tgt)
    half = edit(mapper, s, i_emb, src, tgt, strength=0.5)
    np.testing.assert_allclose(half.direction, 0.5 * base.direction)


def test_mapper_learns_exact_linear_world_quickly():
    # scaled-down version of the full synthetic-world experiment
    world = linear_world(600, clip_dim=16, style_dim=12, partition=(4, 8), seed=6)
    cfg = TrainConfig(steps=500, batch_size=32, hidden=32, learning_rate=2e-3,
                      eval_interval=100)
    mapper, log = train(world.bundle, cfg, seed=7)
    assert log[-1]["heldout_cosine"] > 0.9
    assert log[-1]["total"] < log[0]["total"]
