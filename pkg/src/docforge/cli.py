"""Command-line entry point.

Subcommands: generate (build a dataset), stats (count table), verify
(re-check dataset invariants), filter (case-predicate subsets), eval
(score prediction masks), visualize (overlay forged regions in blue),
and make-corpus (synthetic receipt fixtures for demos and tests).

Configuration precedence is flags over config file over defaults. Usage
errors exit 2; operational failures exit 1.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional

from .bridge import BridgeConfig
from .builder import (
    BuildConfig,
    DatasetManifest,
    MANIFEST_NAME,
    MaskStyle,
    Split,
    build_dataset,
    compute_stats,
    filter_subset,
    format_stats,
    read_manifest,
    scaled_counts,
    verify_dataset,
    write_manifest,
)
from .corpus import AdjacentMargin, AnyWord, TaggedWord, TargetPolicy, load_corpus
from .errors import DocforgeError
from .evaluation import evaluate_repeats, evaluate_run, format_report
from .patterns import CaseKey

CONFIG_VERSION = 1


def _parse_policy(text: str) -> TargetPolicy:
    if text == "any":
        return AnyWord()
    if text == "margin":
        return AdjacentMargin()
    kind, _, tag = text.partition(":")
    if kind == "tag" and tag:
        return TaggedWord(tag)
    if kind == "margin" and tag:
        return AdjacentMargin(tag)
    raise argparse.ArgumentTypeError(
        f"policy must be any, tag:NAME, margin, or margin:NAME, got {text!r}"
    )


def _parse_counts(pairs: list[str]) -> dict[CaseKey, tuple[int, int]]:
    counts = {}
    for spec in pairs:
        try:
            case_text, _, nums = spec.partition("=")
            train_s, _, test_s = nums.partition(",")
            counts[CaseKey.parse(case_text)] = (int(train_s), int(test_s))
        except (ValueError, KeyError) as e:
            raise argparse.ArgumentTypeError(
                f"count spec must look like pattern/method=TRAIN,TEST: {spec!r} ({e})"
            )
    return counts


def _load_config_file(path: Path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise DocforgeError("config file must hold a JSON object")
    version = data.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise DocforgeError(f"unsupported config version: {version!r}")
    return data


def _build_config(args) -> BuildConfig:
    file_cfg = _load_config_file(Path(args.config)) if args.config else {}

    def pick(flag_value, key, default):
        if flag_value is not None:
            return flag_value
        return file_cfg.get(key, default)

    scale = pick(args.scale, "scale", None)
    scale_mode = pick(getattr(args, "scale_mode", None), "scale_mode", "round_per_case")
    counts_flag = _parse_counts(args.count) if args.count else None
    declared = None
    if counts_flag:
        counts = counts_flag
    elif "counts" in file_cfg:
        counts = {
            CaseKey.parse(k): (int(v[0]), int(v[1]))
            for k, v in file_cfg["counts"].items()
        }
    elif scale is not None:
        counts, declared = scaled_counts(float(scale), mode=scale_mode)
    else:
        raise DocforgeError("no case counts: pass --count, --scale, or a config file")
    if declared is None and "declared_totals" in file_cfg:
        declared = tuple(file_cfg["declared_totals"])

    bridge = None
    bridge_cmd = pick(args.bridge_command, "bridge_command", None)
    if bridge_cmd:
        if isinstance(bridge_cmd, str):
            bridge_cmd = bridge_cmd.split()
        bridge = BridgeConfig(
            command=tuple(bridge_cmd),
            timeout_s=float(pick(args.bridge_timeout, "bridge_timeout_s", 60.0)),
        )

    return BuildConfig(
        case_counts=counts,
        master_seed=int(pick(args.seed, "seed", 0)),
        target_policy=_parse_policy(pick(args.policy, "policy", "any")),
        mask_style=MaskStyle(pick(args.mask_style, "mask_style", "changed_pixels")),
        bridge=bridge,
        test_doc_share=float(pick(args.test_doc_share, "test_doc_share", 0.25)),
        declared_totals=tuple(declared) if declared else None,
    )


def _cmd_generate(args) -> int:
    config = _build_config(args)
    corpus = load_corpus(Path(args.corpus))
    manifest = build_dataset(
        config, corpus, Path(args.out),
        progress=(None if args.quiet else lambda msg: print(msg, file=sys.stderr)),
        jobs=args.jobs,
    )
    if config.declared_totals:
        print(f"declared totals: {config.declared_totals[0]} train / "
              f"{config.declared_totals[1]} test")
    print(f"wrote {manifest.n_entries} entries to {args.out}/{MANIFEST_NAME}")
    return 0


def _cmd_stats(args) -> int:
    manifest = read_manifest(Path(args.manifest))
    print(format_stats(compute_stats(manifest)))
    return 0


def _cmd_verify(args) -> int:
    manifest = read_manifest(Path(args.manifest))
    n = verify_dataset(
        manifest,
        progress=(None if args.quiet else lambda msg: print(msg, file=sys.stderr)),
    )
    print(f"ok: {n} entries verified")
    return 0


def _cmd_filter(args) -> int:
    manifest = read_manifest(Path(args.manifest))
    patterns = set(args.pattern or [])
    methods = set(args.method or [])

    def predicate(case: CaseKey) -> bool:
        if patterns and case.pattern.value not in patterns:
            return False
        if methods and case.method.value not in methods:
            return False
        return True

    subset = filter_subset(manifest, predicate, cap=args.cap, seed=args.seed)
    write_manifest(subset, Path(args.out))
    print(f"wrote {subset.n_entries} entries to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    manifest = read_manifest(Path(args.manifest))
    kwargs = dict(
        split=Split(args.split),
        allow_missing=args.allow_missing,
        pooled=args.pooled,
        weighted_overall=args.weighted,
    )
    dirs = [Path(p) for p in args.pred]
    if len(dirs) == 1:
        report = evaluate_run(manifest, dirs[0], **kwargs)
    else:
        report = evaluate_repeats(manifest, dirs, **kwargs)
    if args.json:
        Path(args.json).write_text(report.to_json() + "\n", encoding="utf-8")
    print(format_report(report))
    if report.errors:
        for e in report.errors:
            print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


def _cmd_visualize(args) -> int:
    import numpy as np

    from .builder import load_mask_png
    from .corpus import DocumentImage

    manifest = read_manifest(Path(args.manifest))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    blue = np.array([40, 90, 255], dtype=np.float64)
    alpha = 0.45
    done = 0
    for entry in manifest.entries:
        if args.limit and done >= args.limit:
            break
        image = DocumentImage.load(manifest.resolve(entry.forged_path))
        mask = load_mask_png(manifest.resolve(entry.mask_path)).astype(bool)
        overlay = image.pixels.astype(np.float64)
        overlay[mask] = overlay[mask] * (1 - alpha) + blue * alpha
        out = image.with_pixels(np.clip(overlay, 0, 255).round().astype(np.uint8))
        out.save(out_dir / f"{Path(entry.forged_path).stem}_overlay.png")
        done += 1
    print(f"wrote {done} overlays to {out_dir}")
    return 0


def _cmd_make_corpus(args) -> int:
    from .synth import write_corpus

    ids = write_corpus(Path(args.out), n_documents=args.n, seed=args.seed)
    print(f"wrote {len(ids)} documents to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="docforge",
        description="Synthesize forged document images with exact ground-truth "
        "masks and score forgery-localization predictions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="build a forged-image dataset")
    g.add_argument("--corpus", required=True, help="directory of PNG+JSON documents")
    g.add_argument("--out", required=True, help="output dataset directory")
    g.add_argument("--config", help="JSON config file")
    g.add_argument("--seed", type=int, help="master seed (default 0)")
    g.add_argument("--scale", type=float,
                   help="scale the built-in full-size accounting by this factor")
    g.add_argument("--scale-mode", choices=["round_per_case", "largest_remainder"],
                   help="how scaled per-case counts are rounded")
    g.add_argument("--count", action="append", metavar="CASE=TRAIN,TEST",
                   help="explicit per-case counts, e.g. text_removal/copy_move=5,2")
    g.add_argument("--mask-style", choices=[s.value for s in MaskStyle])
    g.add_argument("--policy", help="target policy: any, tag:NAME, margin, margin:NAME")
    g.add_argument("--test-doc-share", type=float, dest="test_doc_share")
    g.add_argument("--bridge-command", help="external generator argv (space-separated)")
    g.add_argument("--bridge-timeout", type=float)
    g.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="parallel workers; output is identical for any value")
    g.add_argument("--quiet", action="store_true")
    g.set_defaults(func=_cmd_generate)

    s = sub.add_parser("stats", help="per-case count table for a manifest")
    s.add_argument("--manifest", required=True)
    s.set_defaults(func=_cmd_stats)

    v = sub.add_parser("verify", help="re-check every dataset invariant")
    v.add_argument("--manifest", required=True)
    v.add_argument("--quiet", action="store_true")
    v.set_defaults(func=_cmd_verify)

    f = sub.add_parser("filter", help="write a filtered subset manifest")
    f.add_argument("--manifest", required=True)
    f.add_argument("--out", required=True, help="path for the subset manifest")
    f.add_argument("--pattern", action="append",
                   help="keep only these editing patterns (repeatable)")
    f.add_argument("--method", action="append",
                   help="keep only these method families (repeatable)")
    f.add_argument("--cap", type=int, default=10_000)
    f.add_argument("--seed", type=int, default=0)
    f.set_defaults(func=_cmd_filter)

    e = sub.add_parser("eval", help="score prediction masks against ground truth")
    e.add_argument("--manifest", required=True)
    e.add_argument("--pred", action="append", required=True,
                   help="predictions directory; repeat for repeat-average mode")
    e.add_argument("--split", choices=[s.value for s in Split], default="test")
    e.add_argument("--allow-missing", action="store_true",
                   help="score missing predictions as all-authentic")
    e.add_argument("--pooled", action="store_true",
                   help="pool pixel counts within each case instead of per-image")
    e.add_argument("--weighted", action="store_true",
                   help="overall = sample-weighted mean instead of unweighted")
    e.add_argument("--json", help="also write the report as JSON here")
    e.set_defaults(func=_cmd_eval)

    z = sub.add_parser("visualize", help="overlay forged regions in blue")
    z.add_argument("--manifest", required=True)
    z.add_argument("--out", required=True)
    z.add_argument("--limit", type=int, default=0, help="stop after N overlays")
    z.set_defaults(func=_cmd_visualize)

    m = sub.add_parser("make-corpus", help="generate synthetic receipt documents")
    m.add_argument("--out", required=True)
    m.add_argument("--n", type=int, default=8)
    m.add_argument("--seed", type=int, default=0)
    m.set_defaults(func=_cmd_make_corpus)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DocforgeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
