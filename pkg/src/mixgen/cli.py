"""Command-line front end.

Exit codes: 0 on success, 1 on usage errors, 2 on runtime errors. The env var
MIXGEN_LOG (error, warn, info, debug) controls log verbosity on stderr; all
command output is JSON on stdout.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from . import dataio, metrics, pipeline
from .embedding import concat_text_embeddings, mix_image_embeddings
from .errors import MixGenError
from .pipeline import batch_rng, mix_batch, resolve_m
from .types import (
    AbsoluteM,
    Batch,
    BetaLambda,
    FixedLambda,
    FractionM,
    MixGenConfig,
    Variant,
    canonical_lambda_policy,
    validate_config,
)

log = logging.getLogger("mixgen")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D102 - argparse hook
        raise UsageError(message)


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "1", "yes"):
        return True
    if v in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {s!r}")


def _parse_resize(s: str) -> tuple[int, int]:
    try:
        h, w = s.lower().split("x")
        h, w = int(h), int(w)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected HxW like 256x256, got {s!r}") from exc
    if h < 1 or w < 1:
        raise argparse.ArgumentTypeError(f"resize dims must be positive, got {s!r}")
    return h, w


def _parse_beta(s: str) -> tuple[float, float]:
    try:
        a, b = (float(part) for part in s.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected A,B like 0.1,0.1, got {s!r}") from exc
    return a, b


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    lam = p.add_mutually_exclusive_group()
    lam.add_argument("--lambda", dest="lambda_", type=float, default=None, metavar="F",
                     help="fixed interpolation coefficient (default 0.5)")
    lam.add_argument("--beta", type=_parse_beta, default=None, metavar="A,B",
                     help="draw the coefficient from Beta(A,B) per pair")
    p.add_argument("--variant", choices=[v.value for v in Variant], default="default",
                   help="generation rule (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, metavar="U64",
                   help="global seed (default %(default)s)")
    p.add_argument("--resize", type=_parse_resize, default=(256, 256), metavar="HxW",
                   help="decode target size (default 256x256)")
    p.add_argument("--max-tokens", type=int, default=None, metavar="N",
                   help="cap generated text at the leading N tokens")


def _config_from_flags(args, m_ratio: float = 0.25, m: Optional[int] = None) -> MixGenConfig:
    variant = Variant(args.variant)
    if args.beta is not None:
        lambda_policy = BetaLambda(*args.beta)
    elif args.lambda_ is not None:
        lambda_policy = FixedLambda(args.lambda_)
    else:
        lambda_policy = canonical_lambda_policy(variant)
    m_policy = AbsoluteM(m) if m is not None else FractionM(m_ratio)
    config = MixGenConfig(
        lambda_policy=lambda_policy,
        m_policy=m_policy,
        variant=variant,
        seed=args.seed,
        target_height=args.resize[0],
        target_width=args.resize[1],
        max_tokens=args.max_tokens,
    )
    try:
        return validate_config(config)
    except (MixGenError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _require_file(path: str, flag: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{flag}: no such file: {path}")
    return p


def _emit(payload: dict) -> None:
    json.dump(payload, sys.stdout, indent=2)
    sys.stdout.write("\n")


# --- Subcommands ---------------------------------------------------------------

def cmd_augment(args) -> int:
    manifest = _require_file(args.manifest, "--manifest")
    config = _config_from_flags(args, m_ratio=args.m_ratio, m=args.m)
    try:
        resolve_m(config.m_policy, args.batch_size)
    except MixGenError as exc:
        raise UsageError(str(exc)) from exc
    report = pipeline.run(
        manifest,
        config,
        batch_size=args.batch_size,
        out_dir=args.out,
        workers=args.workers,
        drop_last=args.drop_last,
        skip_errors=args.skip_errors,
    )
    _emit(report.to_json())
    return 0


def cmd_preview(args) -> int:
    manifest = _require_file(args.manifest, "--manifest")
    config = _config_from_flags(args)
    n = args.n
    if n < 1:
        raise UsageError(f"--n must be >= 1, got {n}")
    pairs = dataio.expand_pairs(dataio.parse_manifest(manifest))
    if 2 * n > len(pairs):
        raise UsageError(f"--n {n} needs {2 * n} pairs but the manifest expands to {len(pairs)}")

    perm = np.random.default_rng(config.seed).permutation(len(pairs))
    chosen = [
        dataio.resolve_image(pairs[i], config.target_height, config.target_width)
        for i in perm[: 2 * n]
    ]
    config = replace(config, m_policy=AbsoluteM(n))
    _, generated = mix_batch(Batch(tuple(chosen)), config, batch_rng(config, 0))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "preview.jsonl", "w", encoding="utf-8") as sidecar:
        for k, g in enumerate(generated):
            a, b = chosen[k], chosen[k + n]
            strip = np.concatenate([a.image.data, b.image.data, g.pair.image.data], axis=1)
            rel = f"preview_{k:04d}.png"
            Image.fromarray(
                np.floor(strip * 255.0 + 0.5).clip(0, 255).astype(np.uint8), mode="RGB"
            ).save(out / rel)
            sidecar.write(json.dumps({
                "id": g.pair.id,
                "image": rel,
                "text_a": a.text.raw,
                "text_b": b.text.raw,
                "text": g.pair.text.raw,
                "lambda": g.lambda_used,
                "variant": g.variant_used.value,
                "sources": list(g.sources),
            }, ensure_ascii=False) + "\n")
    _emit({"previews": len(generated), "out": str(out)})
    return 0


def cmd_mix_embeddings(args) -> int:
    fa = dataio.read_tensor(_require_file(args.image_a, "--image-a"))
    fb = dataio.read_tensor(_require_file(args.image_b, "--image-b"))
    ta = dataio.read_tensor(_require_file(args.text_a, "--text-a"))
    tb = dataio.read_tensor(_require_file(args.text_b, "--text-b"))
    mixed = mix_image_embeddings(fa, fb, args.lambda_)
    joined = concat_text_embeddings(ta, tb)
    image_out = f"{args.out_prefix}_image.mxtn"
    text_out = f"{args.out_prefix}_text.mxtn"
    dataio.write_tensor(mixed, image_out)
    dataio.write_tensor(joined, text_out)
    _emit({
        "image_out": image_out,
        "image_shape": list(mixed.data.shape),
        "text_out": text_out,
        "text_shape": list(joined.data.shape),
    })
    return 0


def cmd_metrics(args) -> int:
    scores_fm = dataio.read_tensor(_require_file(args.scores, "--scores"))
    with open(_require_file(args.ground_truth, "--ground-truth"), "r", encoding="utf-8") as fh:
        gt_doc = json.load(fh)
    if "image_to_texts" not in gt_doc:
        raise UsageError("--ground-truth JSON must contain 'image_to_texts'")
    gt = metrics.GroundTruth.from_image_to_texts(gt_doc["image_to_texts"])
    report = metrics.evaluate_retrieval(metrics.ScoreMatrix.from_array(scores_fm.data), gt)
    _emit(report.to_json())
    return 0


def cmd_stats(args) -> int:
    by_source = {}
    for path in args.manifest:
        p = _require_file(path, "--manifest")
        by_source[p.stem] = dataio.parse_manifest(p)
    _emit(dataio.compute_stats(by_source).to_json())
    return 0


def cmd_fetch(args) -> int:
    records = dataio.parse_manifest(_require_file(args.manifest, "--manifest"))
    report = dataio.fetch_remote(
        records, args.dest, parallelism=args.parallelism, retries=args.retries
    )
    log.info("fetched %d of %d records", report.succeeded, report.succeeded + report.failed)
    _emit(report.to_json())
    return 0


def cmd_bench(args) -> int:
    manifest = _require_file(args.manifest, "--manifest")
    config = _config_from_flags(args, m_ratio=args.m_ratio, m=args.m)
    try:
        m = resolve_m(config.m_policy, args.batch_size)
    except MixGenError as exc:
        raise UsageError(str(exc)) from exc
    pairs = dataio.expand_pairs(dataio.parse_manifest(manifest))
    plans = pipeline.plan_batches(len(pairs), args.batch_size, config.seed, drop_last=True)

    stage = {"load": 0.0, "augment": 0.0, "baseline_copy": 0.0}
    pairs_processed = 0
    generated = 0
    t_start = time.perf_counter()
    for _ in range(args.iterations):
        for plan in plans:
            t0 = time.perf_counter()
            loaded = [
                dataio.resolve_image(pairs[i], config.target_height, config.target_width)
                for i in plan.member_indices
            ]
            t1 = time.perf_counter()
            batch = Batch(tuple(loaded))
            _, gen = mix_batch(batch, config, batch_rng(config, plan.batch_index))
            t2 = time.perf_counter()
            # Pass-through baseline: a stage that forwards the batch unchanged,
            # materializing one output buffer per image.
            passthrough = [np.copy(p.image.data) for p in loaded]
            t3 = time.perf_counter()
            del passthrough
            stage["load"] += t1 - t0
            stage["augment"] += t2 - t1
            stage["baseline_copy"] += t3 - t2
            pairs_processed += batch.size
            generated += len(gen)
    wall = time.perf_counter() - t_start
    _emit({
        "pairs_processed": pairs_processed,
        "pairs_generated": generated,
        "batches": len(plans) * args.iterations,
        "batch_size": args.batch_size,
        "m_per_batch": m,
        "wall_time": wall,
        "pairs_per_sec": pairs_processed / wall if wall > 0 else 0.0,
        "per_stage_seconds": stage,
        "augment_overhead_vs_copy": (
            stage["augment"] / stage["baseline_copy"] if stage["baseline_copy"] > 0 else 0.0
        ),
    })
    return 0


# --- Parser ---------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="mixgen", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("augment", help="augment a manifest into an output shard")
    p.add_argument("--manifest", required=True, metavar="PATH")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--batch-size", type=int, default=512, metavar="N")
    mgrp = p.add_mutually_exclusive_group()
    mgrp.add_argument("--m-ratio", type=float, default=0.25, metavar="F",
                      help="replace floor(F*B) pairs per batch (default %(default)s)")
    mgrp.add_argument("--m", type=int, default=None, metavar="N",
                      help="replace exactly N pairs per batch")
    _add_config_flags(p)
    p.add_argument("--workers", type=int, default=None, metavar="N",
                   help="parallel batch workers (default: auto)")
    p.add_argument("--drop-last", type=_parse_bool, default=True, metavar="BOOL",
                   help="drop a trailing partial batch (default true)")
    p.add_argument("--skip-errors", type=_parse_bool, default=False, metavar="BOOL",
                   help="skip batches with undecodable records (default false)")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("preview", help="render side-by-side composites of generated pairs")
    p.add_argument("--manifest", required=True, metavar="PATH")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--n", type=int, default=8, metavar="N",
                   help="number of composites (default %(default)s)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_preview)

    p = sub.add_parser("mix-embeddings", help="mix image features and concat text features")
    p.add_argument("--image-a", required=True, metavar="PATH")
    p.add_argument("--image-b", required=True, metavar="PATH")
    p.add_argument("--text-a", required=True, metavar="PATH")
    p.add_argument("--text-b", required=True, metavar="PATH")
    p.add_argument("--lambda", dest="lambda_", type=float, default=0.5, metavar="F")
    p.add_argument("--out-prefix", required=True, metavar="PATH")
    p.set_defaults(func=cmd_mix_embeddings)

    p = sub.add_parser("metrics", help="retrieval recalls from a score matrix")
    p.add_argument("--scores", required=True, metavar="PATH",
                   help="rank-2 tensor file, images x texts")
    p.add_argument("--ground-truth", required=True, metavar="PATH",
                   help='JSON {"image_to_texts": [[...], ...]}')
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("stats", help="dataset statistics from one or more manifests")
    p.add_argument("--manifest", required=True, action="append", metavar="PATH")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("fetch", help="download url records, tolerating dead links")
    p.add_argument("--manifest", required=True, metavar="PATH")
    p.add_argument("--dest", required=True, metavar="DIR")
    p.add_argument("--parallelism", type=int, default=16, metavar="N")
    p.add_argument("--retries", type=int, default=2, metavar="N")
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("bench", help="throughput of the load/augment stages")
    p.add_argument("--manifest", required=True, metavar="PATH")
    p.add_argument("--batch-size", type=int, default=512, metavar="N")
    p.add_argument("--iterations", type=int, default=1, metavar="N")
    mgrp = p.add_mutually_exclusive_group()
    mgrp.add_argument("--m-ratio", type=float, default=0.25, metavar="F")
    mgrp.add_argument("--m", type=int, default=None, metavar="N")
    _add_config_flags(p)
    p.set_defaults(func=cmd_bench)

    return parser


def _setup_logging() -> None:
    level = {
        "error": logging.ERROR,
        "warn": logging.WARNING,
        "info": logging.INFO,
        "debug": logging.DEBUG,
    }.get(os.environ.get("MIXGEN_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[list[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except MixGenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
