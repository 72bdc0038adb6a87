"""Batch command-line surface.

Every subcommand prints one machine-readable JSON object on stdout and
exits 0 on success; failures print a JSON object with an "error" field and
exit 1. Binary artifacts go to the paths given by flags, never into the
JSON. Config file values are overridden by flags; all randomness is
seed-driven.

Text embeddings are consumed as files; no text is embedded here. The usual
prompt convention puts every requested attribute into the target prompt
(row 1) and keeps the bare subject as the source (row 0), e.g. "face" ->
"face with smile".
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import config as cfg
from .bundle import LevelPartition, read_bundle, sample_pairs, write_bundle
from .checkpoint import load_raw, save_raw
from .delta_features import alignment_report, export_csv, make_delta, unit_normalize
from .diffusion import (DiffusionSchedule, GaussianOracle, StylePredictor,
                        ddim_decode, ddim_invert, ddim_sample,
                        export_trajectory_csv, train_style_predictor)
from .disentangle import (RelevanceMatrix, TabulatedLinearProbe, build_mask,
                          estimate_relevance)
from .interp import lerp_codes, lerp_edits, slerp, splice_styles
from .mapper import DirectionMapper, edit, train
from .metrics import mse, psnr, ssim
from .synthetic import constant_style_world, linear_world, paired_world


def _emit(payload, code=0):
    json.dump(payload, sys.stdout, indent=2, sort_keys=True, default=float)
    sys.stdout.write("\n")
    return code


def _schedule_from(config, args) -> DiffusionSchedule:
    s = config["schedule"]
    return DiffusionSchedule.linear(int(s["t_max"]), float(s["beta_start"]),
                                    float(s["beta_end"]), s["sigma_mode"])


def _predictor_from(spec, schedule, dim):
    if spec == "oracle":
        return GaussianOracle(schedule, np.zeros(dim), np.ones(dim))
    return StylePredictor.load(spec)


def _load_vector(path, length, what):
    vec = load_raw(path)
    if vec.shape != (length,):
        raise ValueError(f"{what} file {path} holds {vec.shape[0]} floats, "
                         f"expected {length}")
    return vec


# ---------------------------------------------------------------------------
# Subcommand bodies

def cmd_analyze(args, config):
    bundle = read_bundle(args.bundle)
    texts = load_raw(args.texts, columns=bundle.clip_dim)
    if texts.shape[0] != len(bundle):
        raise ValueError(f"{texts.shape[0]} text rows for {len(bundle)} records")
    images = bundle.clips()
    raw = alignment_report(images, texts)
    pairs = sample_pairs(bundle, args.pairs, seed=args.seed)
    index = {id(r): i for i, r in enumerate(bundle.records)}
    d_img, d_txt = [], []
    for a, b in pairs:
        i, j = index[id(a)], index[id(b)]
        d_img.append(make_delta(images[i], images[j]).delta)
        d_txt.append(make_delta(texts[i], texts[j]).delta)
    delta = alignment_report(np.array(d_img), np.array(d_txt))
    if args.csv_out:
        labels = [f"delta_img_{k}" for k in range(len(d_img))] \
            + [f"delta_txt_{k}" for k in range(len(d_txt))]
        export_csv(np.vstack([d_img, d_txt]), labels, args.csv_out)
    return {"raw": raw.to_dict(), "delta": delta.to_dict(),
            "pairs": args.pairs}


def cmd_train_mapper(args, config):
    bundle = read_bundle(args.bundle)
    train_cfg = cfg.mapper_train_config(config)
    mapper, log = train(bundle, train_cfg, seed=args.seed, log_path=args.log)
    mapper.save(args.out)
    return {"checkpoint": args.out, "steps": train_cfg.steps,
            "condition_mode": train_cfg.condition_mode, "final": log[-1]}


def cmd_edit(args, config):
    mapper = DirectionMapper.load(args.checkpoint)
    style = _load_vector(args.style, mapper.partition.dim, "style code")
    clip = _load_vector(args.clip, mapper.clip_dim, "image embedding")
    texts = load_raw(args.texts, columns=mapper.clip_dim)
    if texts.shape[0] != 2:
        raise ValueError(f"texts file must hold 2 rows (source, target), "
                         f"got {texts.shape[0]}")
    mask_bits = None
    mask_info = {}
    if args.relevance:
        matrix = RelevanceMatrix.load(args.relevance)
        tau = config["disentangle"]["tau"] if args.tau is None else args.tau
        delta_t = make_delta(texts[0], texts[1]).delta
        mask = build_mask(matrix, delta_t, tau)
        mask_bits = mask.as_multiplier()
        mask_info = {"tau": mask.tau,
                     "kept_channels": int(mask.keep.sum()),
                     "total_channels": int(mask.keep.size)}
    strength = None
    if args.debug_strength is not None:
        if not config["debug"]["allow_strength"]:
            raise ValueError("--debug-strength requires debug.allow_strength "
                             "in the config")
        strength = args.debug_strength
    outcome = edit(mapper, style, clip, texts[0], texts[1], mask=mask_bits,
                   strength=strength)
    if args.out:
        save_raw(args.out, outcome.edited)
    if args.direction_out:
        save_raw(args.direction_out, outcome.direction)
    return {"direction_norm": float(np.linalg.norm(outcome.direction)),
            "edited_out": args.out, **mask_info}


def cmd_relevance(args, config):
    table = load_raw(args.probe_table, columns=args.embed_dim)
    if table.shape[0] != args.style_dim:
        raise ValueError(f"probe table has {table.shape[0]} rows, expected "
                         f"{args.style_dim}")
    probe = TabulatedLinearProbe(table)
    count = args.base_codes or config["disentangle"]["base_codes"]
    if args.codes_from_bundle:
        styles = read_bundle(args.codes_from_bundle).styles()
        picks = np.random.default_rng(args.seed).choice(
            styles.shape[0], size=min(count, styles.shape[0]), replace=False)
        base = styles[picks]
    else:
        base = np.random.default_rng(args.seed).normal(
            size=(count, args.style_dim))
    step = args.step or config["disentangle"]["probe_step"]
    matrix = estimate_relevance(probe, base, step=step)
    matrix.save(args.out)
    return {"relevance": args.out, "null_channels": int(matrix.null_rows.sum()),
            "style_dim": args.style_dim, "step": step}


def cmd_diffuse(args, config):
    schedule = _schedule_from(config, args)
    predictor = _predictor_from(args.predictor, schedule, args.dim)
    style = None
    if args.style:
        style = load_raw(args.style)
    rng = np.random.default_rng(args.seed)
    x_top = rng.standard_normal((args.count, args.dim))
    if schedule.is_deterministic:
        out = ddim_decode(schedule, predictor, x_top, style)
    else:
        out = ddim_sample(schedule, predictor, x_top, style, rng)
    if args.trajectory_csv:
        _, states = ddim_decode(schedule, predictor, x_top[0], style,
                                record=True) if schedule.is_deterministic \
            else ddim_sample(schedule, predictor, x_top[0], style, rng,
                             record=True)
        export_trajectory_csv(states, args.trajectory_csv)
    if args.out:
        save_raw(args.out, out)
    return {"count": args.count, "dim": args.dim,
            "t_max": schedule.t_max,
            "mean_norm": float(np.linalg.norm(out.mean(axis=0))),
            "mean_var": float(out.var(axis=0).mean()), "out": args.out}


def cmd_invert(args, config):
    schedule = _schedule_from(config, args)
    x0 = load_raw(args.input)
    predictor = _predictor_from(args.predictor, schedule, x0.shape[0])
    style = load_raw(args.style) if args.style else None
    x_top = ddim_invert(schedule, predictor, x0, style)
    if args.out:
        save_raw(args.out, x_top)
    result = {"t_max": schedule.t_max, "x_top_norm": float(np.linalg.norm(x_top)),
              "out": args.out}
    if args.decode_back:
        back = ddim_decode(schedule, predictor, x_top, style)
        result["roundtrip_mse"] = float(np.mean((back - x0) ** 2))
    return result


def cmd_interp(args, config):
    a = load_raw(args.a)
    b = load_raw(args.b)
    weights = [float(w) for w in args.weights.split(",")]
    ops = {"lerp": lerp_codes, "slerp": slerp, "edit-blend": lerp_edits}
    fn = ops[args.mode]
    rows = np.stack([fn(a, b, w) for w in weights])
    if args.out:
        save_raw(args.out, rows)
    return {"mode": args.mode, "weights": weights,
            "norms": [float(np.linalg.norm(r)) for r in rows], "out": args.out}


def cmd_splice(args, config):
    content = load_raw(args.content)
    style = load_raw(args.style)
    if args.bundle:
        partition = read_bundle(args.bundle).partition
    else:
        c_end, m_end, dim = (int(v) for v in args.partition.split(","))
        partition = LevelPartition(c_end, m_end, dim)
    levels = set(args.levels.split(",")) if args.levels else set()
    mixed = splice_styles(content, style, partition, levels)
    if args.out:
        save_raw(args.out, mixed)
    return {"levels_from_style": sorted(levels),
            "changed": int(np.sum(mixed != content)), "out": args.out}


def cmd_metrics(args, config):
    shape = tuple(int(v) for v in args.shape.split(","))
    a = load_raw(args.a).reshape(shape)
    b = load_raw(args.b).reshape(shape)
    result = {"mse": mse(a, b), "psnr_db": psnr(a, b, args.range)}
    if len(shape) == 2 and min(shape) >= 11:
        result["ssim"] = ssim(a, b, args.range)
    return result


def cmd_make_synthetic(args, config):
    s = config["synthetic"]
    partition = (int(s["c_end"]), int(s["m_end"]))
    common = dict(clip_dim=int(s["clip_dim"]), style_dim=int(s["style_dim"]),
                  partition=partition, seed=args.seed)
    n = args.records or int(s["records"])
    result = {"world": args.world, "records": n, "bundle": args.out,
              "clip_dim": common["clip_dim"], "style_dim": common["style_dim"]}
    if args.world == "linear":
        world = linear_world(n, **common)
        write_bundle(world.bundle, args.out)
        if args.probe_out:
            save_raw(args.probe_out, world.probe_table)
            result["probe_table"] = args.probe_out
    elif args.world == "paired":
        world = paired_world(n, offset_norm=float(s["offset_norm"]),
                             noise=float(s["noise"]), **common)
        write_bundle(world.bundle, args.out)
        if args.texts_out:
            save_raw(args.texts_out, world.texts)
            result["texts"] = args.texts_out
        if args.probe_out:
            save_raw(args.probe_out, world.probe_table)
            result["probe_table"] = args.probe_out
    elif args.world == "constant-style":
        write_bundle(constant_style_world(n, **common), args.out)
    else:
        raise ValueError(f"unknown world {args.world!r}")
    return result


# ---------------------------------------------------------------------------
# Parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentdelta",
        description="Text-free latent-direction editing engine (batch surface)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="seed for all randomness in this command")

    p = sub.add_parser("analyze", help="alignment statistics of paired "
                       "image/text embeddings")
    common(p)
    p.add_argument("--bundle", required=True)
    p.add_argument("--texts", required=True,
                   help="raw float32 rows paired with the bundle records")
    p.add_argument("--pairs", type=int, default=500)
    p.add_argument("--csv-out", help="export delta vectors for external 2-D "
                   "reduction")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("train-mapper", help="fit a direction mapper on a bundle")
    common(p)
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="JSON-lines training log path")
    p.add_argument("--steps", type=int, dest="mapper_steps")
    p.add_argument("--batch-size", type=int, dest="mapper_batch")
    p.add_argument("--hidden", type=int, dest="mapper_hidden")
    p.add_argument("--learning-rate", type=float, dest="mapper_lr")
    p.add_argument("--condition-mode", choices=["delta", "target"],
                   dest="mapper_mode")
    p.set_defaults(fn=cmd_train_mapper)

    p = sub.add_parser("edit", help="apply a text-direction edit to a style code")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--style", required=True, help="raw float32 style code")
    p.add_argument("--clip", required=True, help="raw float32 image embedding")
    p.add_argument("--texts", required=True,
                   help="raw float32 file, 2 rows: source then target")
    p.add_argument("--relevance", help="relevance-matrix checkpoint for masking")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--out", help="edited style code output path")
    p.add_argument("--direction-out", help="raw direction output path")
    p.add_argument("--debug-strength", type=float, default=None)
    p.set_defaults(fn=cmd_edit)

    p = sub.add_parser("relevance", help="estimate a relevance matrix from a "
                       "probe table")
    common(p)
    p.add_argument("--probe-table", required=True,
                   help="raw float32 blob, style_dim x embed_dim")
    p.add_argument("--style-dim", type=int, required=True)
    p.add_argument("--embed-dim", type=int, required=True)
    p.add_argument("--codes-from-bundle")
    p.add_argument("--base-codes", type=int, default=None)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_relevance)

    p = sub.add_parser("diffuse", help="sample from a noise predictor")
    common(p)
    p.add_argument("--predictor", required=True,
                   help="'oracle' or a predictor checkpoint")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--style", help="style code file for conditional predictors")
    p.add_argument("--t-max", type=int, dest="t_max")
    p.add_argument("--sigma-mode", choices=["ddim", "ddpm"], dest="sigma_mode")
    p.add_argument("--trajectory-csv")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_diffuse)

    p = sub.add_parser("invert", help="deterministic inversion of a sample")
    common(p)
    p.add_argument("--predictor", required=True)
    p.add_argument("--input", required=True, help="raw float32 x0 vector")
    p.add_argument("--style")
    p.add_argument("--t-max", type=int, dest="t_max")
    p.add_argument("--decode-back", action="store_true",
                   help="also decode and report round-trip error")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_invert)

    p = sub.add_parser("interp", help="interpolate two vectors")
    common(p)
    p.add_argument("--mode", choices=["lerp", "slerp", "edit-blend"],
                   required=True)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--weights", default="0,0.2,0.4,0.6,0.8,1")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_interp)

    p = sub.add_parser("splice", help="mix level slices of two style codes")
    common(p)
    p.add_argument("--content", required=True)
    p.add_argument("--style", required=True)
    p.add_argument("--levels", default="", help="comma list of coarse,medium,fine")
    p.add_argument("--partition", help="c_end,m_end,dim")
    p.add_argument("--bundle", help="take the partition from this bundle")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_splice)

    p = sub.add_parser("metrics", help="compare two raw float32 arrays")
    common(p)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--shape", required=True, help="comma-separated dims")
    p.add_argument("--range", type=float, default=255.0)
    p.set_defaults(fn=cmd_metrics)

    p = sub.add_parser("make-synthetic", help="generate a synthetic-world bundle")
    common(p)
    p.add_argument("--world", required=True,
                   choices=["linear", "paired", "constant-style"])
    p.add_argument("--out", required=True)
    p.add_argument("--records", type=int, default=None)
    p.add_argument("--texts-out")
    p.add_argument("--probe-out")
    p.set_defaults(fn=cmd_make_synthetic)

    return parser


def _config_overrides(args) -> dict:
    return {
        "mapper.steps": getattr(args, "mapper_steps", None),
        "mapper.batch_size": getattr(args, "mapper_batch", None),
        "mapper.hidden": getattr(args, "mapper_hidden", None),
        "mapper.learning_rate": getattr(args, "mapper_lr", None),
        "mapper.condition_mode": getattr(args, "mapper_mode", None),
        "schedule.t_max": getattr(args, "t_max", None),
        "schedule.sigma_mode": getattr(args, "sigma_mode", None),
    }


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = cfg.load_config(args.config, _config_overrides(args))
        if args.seed is None:
            args.seed = int(config["seed"])
        return _emit(args.fn(args, config))
    except Exception as exc:  # structured failure surface for scripts
        _emit({"error": {"type": type(exc).__name__, "message": str(exc)}})
        return 1


if __name__ == "__main__":
    sys.exit(main())
