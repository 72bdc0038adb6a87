"""Coarse-to-fine direction mapper: predicts a style-space editing direction
from a source style code plus an embedding-space condition.

Three levels (coarse/medium/fine, from the bundle's partition), each with a
Style sub-module reading that level's style slice, a Condition sub-module
reading the shared condition vector, and a Fusion sub-module merging the two
into that level's output slice. Every sub-module is 4 fully-connected layers
with leaky-ReLU (slope 0.2) between them and a linear final layer; the three
fusion outputs are concatenated in partition order.

Two condition modes share the architecture:

* ``delta``  — condition is concat(delta, anchor); trained on embedding
  differences, driven at inference by text-embedding differences.
* ``target`` — condition is concat(source, target), i.e. raw endpoint
  embeddings. Kept for A/B experiments; it degrades when the inference-time
  target comes from the other modality.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .bundle import Bundle, LEVELS, LevelPartition, pair_index_stream
from .checkpoint import load_params, save_params
from .delta_features import DeltaCondition, make_delta, unit_normalize

LEAKY_SLOPE = 0.2
SUBMODULE_DEPTH = 4


class TrainingDiverged(RuntimeError):
    """Total loss became non-finite."""


@dataclass
class LossBreakdown:
    """Euclidean reconstruction term, cosine term, exact sum."""

    rec: float
    sim: float
    total: float


@dataclass
class EditOutcome:
    edited: np.ndarray     # s + direction (after masking)
    direction: np.ndarray  # the masked direction actually applied


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 64
    hidden: int = 128
    learning_rate: float = 1e-3
    eval_interval: int = 200
    heldout_fraction: float = 0.1
    heldout_pairs: int = 256
    condition_mode: str = "delta"  # or "target"


def _layer_dims(in_dim, hidden, out_dim):
    dims = [in_dim] + [hidden] * (SUBMODULE_DEPTH - 1) + [out_dim]
    return list(zip(dims[:-1], dims[1:]))


class DirectionMapper:
    """Parameter container plus reusable computation graph."""

    def __init__(self, clip_dim: int, partition: LevelPartition, hidden: int = 128,
                 condition_mode: str = "delta", seed: int = 0):
        if condition_mode not in ("delta", "target"):
            raise ValueError(f"unknown condition mode {condition_mode!r}")
        self.clip_dim = clip_dim
        self.partition = partition
        self.hidden = hidden
        self.condition_mode = condition_mode
        self.params = ad.ParamStore()
        self._build(seed)

    # -- construction -------------------------------------------------------

    def _init_layer(self, rng, name, fan_in, fan_out, final):
        gain = 1.0 if final else np.sqrt(2.0 / (1.0 + LEAKY_SLOPE ** 2))
        w = self.params.param(f"{name}.w", rng.normal(size=(fan_in, fan_out))
                              * gain / np.sqrt(fan_in))
        b = self.params.param(f"{name}.b", np.zeros(fan_out))
        return w, b

    def _mlp(self, rng, prefix, x, in_dim, out_dim):
        h = x
        for i, (fi, fo) in enumerate(_layer_dims(in_dim, self.hidden, out_dim)):
            final = i == SUBMODULE_DEPTH - 1
            w, b = self._init_layer(rng, f"{prefix}.l{i}", fi, fo, final)
            h = ad.add(ad.matmul(h, w), b)
            if not final:
                h = ad.leaky_relu(h, LEAKY_SLOPE)
        return h

    def _build(self, seed):
        rng = np.random.default_rng(seed)
        self.style_in = ad.input_("style")
        self.cond_in = ad.input_("cond")
        self.target_in = ad.input_("target")
        slices = self.partition.slices()
        outputs = []
        self.level_features = {}
        for level in LEVELS:
            sl = slices[level]
            width = sl.stop - sl.start
            style_feat = self._mlp(rng, f"style.{level}",
                                   ad.slice_(self.style_in, sl.start, sl.stop),
                                   width, self.hidden)
            cond_feat = self._mlp(rng, f"cond.{level}", self.cond_in,
                                  2 * self.clip_dim, self.hidden)
            fused = self._mlp(rng, f"fusion.{level}",
                              ad.concat([cond_feat, style_feat]),
                              2 * self.hidden, width)
            self.level_features[level] = (style_feat, cond_feat)
            outputs.append(fused)
        self.direction_out = ad.concat(outputs)
        self.rec_node = ad.l2_distance(self.direction_out, self.target_in)
        self.sim_node = ad.cosine_loss(self.direction_out, self.target_in)
        self.total_node = ad.add(self.rec_node, self.sim_node)

    # -- evaluation ---------------------------------------------------------

    def condition_rows(self, anchors, partners) -> np.ndarray:
        """Stack condition vectors for a batch.

        ``delta`` mode: partners are delta vectors, laid out delta-first.
        ``target`` mode: partners are raw target embeddings (normalized here).
        """
        anchors = np.atleast_2d(anchors)
        partners = np.atleast_2d(partners)
        if self.condition_mode == "delta":
            return np.concatenate([partners, anchors], axis=1)
        return np.concatenate([anchors, unit_normalize(partners)], axis=1)

    def predict(self, styles, conds) -> np.ndarray:
        """Batch of style codes + condition rows -> batch of directions."""
        out = ad.forward(self.direction_out,
                         {"style": np.atleast_2d(styles),
                          "cond": np.atleast_2d(conds)})
        return out.copy()

    def loss(self, styles, conds, targets) -> LossBreakdown:
        total = ad.forward(self.total_node,
                           {"style": np.atleast_2d(styles),
                            "cond": np.atleast_2d(conds),
                            "target": np.atleast_2d(targets)})
        return LossBreakdown(rec=float(self.rec_node.value),
                             sim=float(self.sim_node.value),
                             total=float(total))

    # -- persistence --------------------------------------------------------

    def save(self, path):
        meta = {"clip_dim": self.clip_dim, "style_dim": self.partition.dim,
                "c_end": self.partition.c_end, "m_end": self.partition.m_end,
                "hidden": self.hidden, "condition_mode": self.condition_mode}
        save_params(path, self.params.arrays(), kind="direction-mapper", meta=meta)

    @classmethod
    def load(cls, path) -> "DirectionMapper":
        kind, arrays, meta = load_params(path)
        if kind != "direction-mapper":
            raise ValueError(f"checkpoint kind {kind!r} is not a direction mapper")
        mapper = cls(clip_dim=int(meta["clip_dim"]),
                     partition=LevelPartition(int(meta["c_end"]), int(meta["m_end"]),
                                              int(meta["style_dim"])),
                     hidden=int(meta["hidden"]),
                     condition_mode=meta["condition_mode"])
        mapper.params.load_arrays(arrays)
        return mapper


# ---------------------------------------------------------------------------
# Spec-level operations

def mapper_forward(mapper: DirectionMapper, style_code, cond: DeltaCondition) -> np.ndarray:
    """Single-sample editing direction from a (anchor, delta) condition."""
    if mapper.condition_mode != "delta":
        raise ValueError("mapper_forward needs a delta-conditioned mapper")
    row = mapper.condition_rows(cond.anchor[None], cond.delta[None])
    return mapper.predict(np.asarray(style_code)[None], row)[0]


def baseline_forward(mapper: DirectionMapper, style_code, source_emb,
                     target_emb) -> np.ndarray:
    """Single-sample direction from raw (source, target) embeddings."""
    if mapper.condition_mode != "target":
        raise ValueError("baseline_forward needs a target-conditioned mapper")
    row = mapper.condition_rows(unit_normalize(source_emb)[None],
                                np.asarray(target_emb)[None])
    return mapper.predict(np.asarray(style_code)[None], row)[0]


def _batch_arrays(bundle_clips, bundle_styles, idx_a, idx_b, mode):
    anchors = unit_normalize(bundle_clips[idx_a])
    if mode == "delta":
        partners = unit_normalize(bundle_clips[idx_b]) - anchors
    else:
        partners = bundle_clips[idx_b]
    targets = bundle_styles[idx_b] - bundle_styles[idx_a]
    return anchors, partners, targets


def train(bundle: Bundle, config: TrainConfig, seed: int, log_path=None):
    """Fit a mapper on record pairs from the bundle.

    Pairs are sampled uniformly (ordered, distinct) from the training split;
    the target for each pair is its style-code difference. Returns the
    trained mapper and the training log (one dict per eval point, also
    written as JSON lines when ``log_path`` is given). Deterministic per
    seed. Raises :class:`TrainingDiverged` if the loss leaves the reals.
    """
    seeds = np.random.SeedSequence(seed).spawn(3)
    init_seed = int(seeds[0].generate_state(1)[0])
    mapper = DirectionMapper(bundle.clip_dim, bundle.partition,
                             hidden=config.hidden,
                             condition_mode=config.condition_mode,
                             seed=init_seed)

    clips, styles = bundle.clips(), bundle.styles()
    n = len(bundle)
    order = np.random.default_rng(int(seeds[1].generate_state(1)[0])).permutation(n)
    n_held = min(int(round(config.heldout_fraction * n)), n - 2)
    held_idx, train_idx = order[:n_held], order[n_held:]

    stream_seed = int(seeds[2].generate_state(1)[0])
    stream = pair_index_stream(len(train_idx), stream_seed)

    held_eval = None
    if n_held >= 2:
        held_stream = pair_index_stream(n_held, stream_seed + 1)
        pairs = [next(held_stream) for _ in range(config.heldout_pairs)]
        ha = held_idx[[p[0] for p in pairs]]
        hb = held_idx[[p[1] for p in pairs]]
        anchors, partners, targets = _batch_arrays(clips, styles, ha, hb,
                                                   config.condition_mode)
        held_eval = (styles[ha], mapper.condition_rows(anchors, partners), targets)

    state = ad.AdamState(lr=config.learning_rate)
    log = []

    def evaluate_heldout():
        if held_eval is None:
            return None
        held_styles, conds, targets = held_eval
        pred = mapper.predict(held_styles, conds)
        num = (pred * targets).sum(axis=1)
        den = np.linalg.norm(pred, axis=1) * np.linalg.norm(targets, axis=1)
        ok = den > 0
        return float((num[ok] / den[ok]).mean())

    def record(step, loss):
        entry = {"step": step, "rec": loss.rec, "sim": loss.sim,
                 "total": loss.total, "heldout_cosine": evaluate_heldout()}
        log.append(entry)

    for step in range(config.steps + 1):
        idx = [next(stream) for _ in range(config.batch_size)]
        ia = train_idx[[p[0] for p in idx]]
        ib = train_idx[[p[1] for p in idx]]
        anchors, partners, targets = _batch_arrays(clips, styles, ia, ib,
                                                   config.condition_mode)
        conds = mapper.condition_rows(anchors, partners)
        loss = mapper.loss(styles[ia], conds, targets)
        if not np.isfinite(loss.total):
            raise TrainingDiverged(f"loss {loss.total} at step {step}")
        last = step == config.steps
        # gradients must be taken before any heldout forward pass reuses
        # (and overwrites) the cached activations
        grads = None if last else ad.backward(mapper.total_node)
        if step % config.eval_interval == 0 or last:
            record(step, loss)
        if last:
            break
        ad.adam_step(mapper.params.arrays(), grads, state)

    if log_path is not None:
        with open(log_path, "w") as fh:
            for entry in log:
                fh.write(json.dumps(entry) + "\n")
    return mapper, log


def edit(mapper: DirectionMapper, style_code, clip_emb, source_text_emb,
         target_text_emb, mask=None, strength=None) -> EditOutcome:
    """Apply a text-direction edit to one style code.

    The condition delta comes from the two text embeddings, the anchor from
    the image-side embedding. ``mask`` (keep bits per channel) zeroes
    channels before the direction is added. ``strength`` rescales the
    direction and exists for debugging only; the trained mapper is meant to
    be used without it.
    """
    style_code = np.asarray(style_code, dtype=np.float64)
    cond = DeltaCondition(anchor=unit_normalize(clip_emb),
                          delta=make_delta(source_text_emb, target_text_emb).delta)
    direction = mapper_forward(mapper, style_code, cond)
    if strength is not None:
        direction = direction * float(strength)
    if mask is not None:
        keep = np.asarray(mask, dtype=np.float64)
        if keep.shape != style_code.shape:
            raise ValueError(f"mask dim {keep.shape} != style dim {style_code.shape}")
        direction = direction * keep
    return EditOutcome(edited=style_code + direction, direction=direction)
