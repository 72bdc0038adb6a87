"""embex command line: extract-images | extract-texts | probe-table."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .extract import ExtractionJob, extract_images, extract_texts, write_probe_table


def _emit(payload, code=0):
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return code


def build_parser():
    parser = argparse.ArgumentParser(
        prog="embex", description="Embedding extraction adapter")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract-images",
                       help="encode an image folder into a bundle")
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--image-encoder", default="pixel-projection")
    p.add_argument("--style-encoder", default="pixel-projection",
                   help="'pixel-projection' or 'npz:<codes.npz>'")
    p.add_argument("--clip-dim", type=int, default=512)
    p.add_argument("--style-dim", type=int, default=96)
    p.add_argument("--c-end", type=int, default=32)
    p.add_argument("--m-end", type=int, default=64)

    p = sub.add_parser("extract-texts",
                       help="encode prompts (one per line) into embedding rows")
    p.add_argument("--prompts", required=True,
                   help="text file, one prompt per line")
    p.add_argument("--out", required=True)
    p.add_argument("--encoder", default="hash-projection")
    p.add_argument("--dim", type=int, default=512)

    p = sub.add_parser("probe-table",
                       help="tabulate the style-to-embedding relation of a "
                            "deterministic encoder pair")
    p.add_argument("--out", required=True)
    p.add_argument("--image-encoder", default="pixel-projection")
    p.add_argument("--style-encoder", default="pixel-projection")
    p.add_argument("--clip-dim", type=int, default=512)
    p.add_argument("--style-dim", type=int, default=96)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "extract-images":
            job = ExtractionJob(image_dir=args.images, out_path=args.out,
                                image_encoder=args.image_encoder,
                                style_encoder=args.style_encoder,
                                clip_dim=args.clip_dim,
                                style_dim=args.style_dim,
                                c_end=args.c_end, m_end=args.m_end)
            manifest = extract_images(job)
            return _emit({"bundle": args.out, "records": len(manifest["ids"]),
                          "skipped": len(manifest["skipped"]),
                          "encoder": manifest["encoder"]})
        if args.command == "extract-texts":
            prompts = [line.strip() for line in
                       Path(args.prompts).read_text().splitlines()
                       if line.strip()]
            count = extract_texts(prompts, args.out, encoder=args.encoder,
                                  dim=args.dim)
            return _emit({"texts": args.out, "rows": count, "dim": args.dim})
        shape = write_probe_table(args.out, image_encoder=args.image_encoder,
                                  style_encoder=args.style_encoder,
                                  clip_dim=args.clip_dim,
                                  style_dim=args.style_dim)
        return _emit({"probe_table": args.out, "shape": list(shape)})
    except Exception as exc:
        _emit({"error": {"type": type(exc).__name__, "message": str(exc)}})
        return 1


if __name__ == "__main__":
    sys.exit(main())
