"""Command-line entry point: segment | evaluate | parse | cache-proposals | synth."""
from __future__ import annotations

import argparse
import hashlib
import importlib.util
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from PIL import Image

from .config import ABLATIONS, CACHE_ENV, ConfigError, RunConfig, load_config
from .core import as_image, rle_encode
from .encoder.base import STRATEGIES, EncoderError
from .guidance import CoherenceError, TokenSimilarityProvider
from .parser import parse_expression
from .pipeline import (NoProposalsError, build_encoder, evaluate, overlay, read_dataset, segment)
from .proposals import ProposalError, ProposalGenConfig, cache_path, load_or_generate, write_cache

log = logging.getLogger("hybridgl")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2)


class DiskCachedProvider:
    """Caches localization maps as ``.npy`` files keyed by image, text and encoder."""

    def __init__(self, provider, directory, key: str):
        self.provider = provider
        self.directory = Path(directory)
        self.key = key

    def locate(self, image, text):
        h = hashlib.sha256()
        h.update(self.key.encode())
        h.update(np.ascontiguousarray(image).tobytes())
        h.update(str(np.asarray(image).shape).encode())
        h.update(text.encode())
        path = self.directory / f"{h.hexdigest()[:24]}.coherence.npy"
        if path.exists():
            return np.load(path)
        out = np.asarray(self.provider.locate(image, text), dtype=np.float64)
        self.directory.mkdir(parents=True, exist_ok=True)
        np.save(path, out)
        return out


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def _add_json(p):
    p.add_argument("--json", action="store_true", help="machine-readable JSON on stdout")


def _add_run_options(p):
    p.add_argument("--config", help="TOML run configuration; flags override it")
    enc = p.add_mutually_exclusive_group()
    enc.add_argument("--toy-encoder", action="store_true", help="use the seeded toy encoder (default)")
    enc.add_argument("--clip-encoder", metavar="MODEL", help="use a Hugging Face CLIP checkpoint")
    p.add_argument("--seed", type=int, help="toy encoder seed")
    p.add_argument("--alpha", type=float)
    p.add_argument("--lambda", dest="lam", type=float, help="default negative-score weight")
    p.add_argument("--top-k", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--fusion-start-layer", type=int)
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--ablate", action="append", default=[], choices=ABLATIONS)
    for name in ABLATIONS:
        p.add_argument(f"--{name}", dest=name.replace("-", "_"), action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hybridgl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("segment", help="pick the proposal matching an expression")
    p.add_argument("--image", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--proposals", help=f"proposal cache file or directory (default ${CACHE_ENV})")
    p.add_argument("--image-id", help="defaults to the image file stem")
    p.add_argument("--out-dir", default=".", help="where the overlay and score table go")
    _add_run_options(p)
    _add_json(p)

    p = sub.add_parser("evaluate", help="oIoU / mIoU over a JSONL dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--proposals-dir")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="also write the JSON report here")
    _add_run_options(p)
    _add_json(p)

    p = sub.add_parser("parse", help="show how an expression is parsed")
    p.add_argument("--text", required=True)
    _add_json(p)

    p = sub.add_parser("cache-proposals", help="run the live SAM adapter over a folder of images")
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--points-per-side", type=int, default=8)
    p.add_argument("--iou-thresh", type=float, default=0.7)
    p.add_argument("--stability-thresh", type=float, default=0.7)
    p.add_argument("--checkpoint", help="SAM checkpoint path")
    p.add_argument("--model-type", default="vit_h")
    _add_json(p)

    p = sub.add_parser("synth", help="write seeded synthetic scenes with ground truth")
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    _add_json(p)
    return parser


def run_config_from(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    over = {}
    if args.clip_encoder:
        over.update(encoder="clip", clip_model=args.clip_encoder)
    elif args.toy_encoder:
        over["encoder"] = "toy"
    if args.seed is not None:
        over["seed"] = args.seed
    guidance = {k: v for k, v in (("alpha", args.alpha), ("lambda_default", args.lam),
                                  ("top_k", args.top_k)) if v is not None}
    hybrid = {k: v for k, v in (("beta", args.beta), ("fusion_start_layer", args.fusion_start_layer),
                                ("strategy", args.strategy)) if v is not None}
    if guidance:
        over["guidance"] = guidance
    if hybrid:
        over["hybrid"] = hybrid
    ablations = set(cfg.ablations) | set(args.ablate)
    ablations |= {name for name in ABLATIONS if getattr(args, name.replace("-", "_"))}
    over["ablations"] = sorted(ablations)
    return cfg.replace(**over)


def _provider(encoder, cfg: RunConfig):
    provider = TokenSimilarityProvider(encoder, cfg.hybrid.text_template)
    cache = os.environ.get(CACHE_ENV)
    if cache:
        key = _dump({"encoder": cfg.encoder, "toy": cfg.toy, "seed": cfg.seed, "clip": cfg.clip_model})
        provider = DiskCachedProvider(provider, Path(cache) / "coherence", key)
    return provider


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_segment(args) -> int:
    cfg = run_config_from(args)
    image_path = Path(args.image)
    image = as_image(np.asarray(Image.open(image_path).convert("RGB")))
    image_id = args.image_id or image_path.stem
    source = args.proposals or os.environ.get(CACHE_ENV)
    pset = load_or_generate(image, image_id, source, cfg.proposals)
    encoder = build_encoder(cfg)
    result = segment(image, args.text, pset, encoder, cfg, _provider(encoder, cfg))

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    overlay_path = out_dir / f"{image_id}.overlay.png"
    Image.fromarray(overlay(image, result.winner)).save(overlay_path)
    doc = {
        "image_id": image_id,
        "expression": args.text,
        "parsed": result.parsed.to_json(),
        "semantic_path": result.semantic_path,
        "winner_index": result.table.winner_index,
        "winner_rle": rle_encode(result.winner),
        "scores": result.table.to_json(),
        "overlay": str(overlay_path),
        "config": cfg.to_dict(),
    }
    scores_path = out_dir / f"{image_id}.scores.json"
    scores_path.write_text(_dump(doc) + "\n")
    if args.json:
        print(_dump(doc))
    else:
        print(f"{image_id}: {args.text!r} -> proposal {result.table.winner_index} "
              f"({result.semantic_path})")
        print(f"{'idx':>4} {'sem_raw':>9} {'sem':>7} {'spa_raw':>9} {'spa':>7} {'final':>7}")
        for r in result.table.rows():
            mark = " *" if r["index"] == result.table.winner_index else ""
            print(f"{r['index']:>4} {r['semantic_raw']:>9.4f} {r['semantic_norm']:>7.4f} "
                  f"{r['spatial_raw']:>9.4f} {r['spatial_norm']:>7.4f} {r['final']:>7.4f}{mark}")
        print(f"overlay: {overlay_path}\nscores:  {scores_path}")
    return EXIT_OK


def _default_proposals_dir(dataset: Path) -> Path:
    local = dataset.parent / "proposals"
    if local.is_dir():
        return local
    env = os.environ.get(CACHE_ENV)
    return Path(env) if env else dataset.parent


def cmd_evaluate(args) -> int:
    cfg = run_config_from(args)
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    dataset_path = Path(args.dataset)
    samples = read_dataset(dataset_path)
    if not samples:
        raise ValueError(f"dataset {dataset_path} is empty")
    source = Path(args.proposals_dir) if args.proposals_dir else _default_proposals_dir(dataset_path)
    encoder = build_encoder(cfg)
    report = evaluate(samples, source, encoder, cfg, _provider(encoder, cfg), workers=args.workers)
    doc = report.to_json()
    if args.out:
        Path(args.out).write_text(_dump(doc) + "\n")
    print(_dump(doc) if args.json else report.to_text())
    return EXIT_OK


def cmd_parse(args) -> int:
    print(_dump(parse_expression(args.text).to_json()))
    return EXIT_OK


def cmd_cache_proposals(args) -> int:
    from .proposals import SamProposalProvider

    config = ProposalGenConfig(args.iou_thresh, args.stability_thresh, args.points_per_side)
    if importlib.util.find_spec("segment_anything") is None:
        raise ProposalError("live proposal generation needs the 'segment_anything' package")
    if not args.checkpoint:
        raise ProposalError("cache-proposals needs --checkpoint for the live SAM adapter")
    provider = SamProposalProvider(args.checkpoint, args.model_type)
    written = []
    for path in sorted(Path(args.images).iterdir()):
        if path.suffix.lower() not in (".png", ".jpg", ".jpeg", ".bmp"):
            continue
        image = np.asarray(Image.open(path).convert("RGB"))
        pset = load_or_generate(image, path.stem, provider, config)
        written.append(str(write_cache(pset, cache_path(args.out, path.stem))))
    print(_dump({"written": written}) if args.json else "\n".join(written))
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synthetic import generate_scenes, write_scenes

    scenes = generate_scenes(args.count, args.seed)
    dataset = write_scenes(scenes, args.out)
    summary = {"dataset": str(dataset), "count": len(scenes), "seed": args.seed,
               "position": sum(s.scene_kind == "position" for s, _, _ in scenes),
               "relation": sum(s.scene_kind == "relation" for s, _, _ in scenes)}
    print(_dump(summary) if args.json else f"wrote {len(scenes)} scenes to {args.out} ({dataset})")
    return EXIT_OK


COMMANDS = {"segment": cmd_segment, "evaluate": cmd_evaluate, "parse": cmd_parse,
            "cache-proposals": cmd_cache_proposals, "synth": cmd_synth}


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"hybridgl: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"hybridgl: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NoProposalsError, ProposalError, EncoderError, CoherenceError, ValueError,
            OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"hybridgl: {exc}", file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
