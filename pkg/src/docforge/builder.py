"""Batch dataset construction with deterministic seeding and accounting.

A build walks a case-count table (how many train and test samples per
taxonomy cell), draws source documents from split-disjoint pools, applies
the edit, and emits forged image + mask pairs plus a line-oriented
manifest. Every sample's randomness is derived by hashing
(master_seed, document id, case, split, index, attempt), so builds are
reproducible byte-for-byte and independent of execution order.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path, PurePosixPath
from typing import Callable, Iterable, Optional

import numpy as np

from . import __version__
from .bridge import BridgeConfig, bridged_inpaint
from .corpus import AnyWord, DocumentImage, OcrAnnotation, Region, TargetPolicy
from .editops import changed_pixels
from .errors import (
    DegenerateSample,
    EmptyCorpus,
    EmptySelectionError,
    ManifestError,
    NoBlankRegion,
    NoDonorWord,
    NoMatchingTarget,
    OutputUnwritable,
    QuotaUnreachable,
    VerificationError,
)
from .patterns import (
    CaseKey,
    EditPattern,
    EditRecord,
    GeneratorKind,
    MethodFamily,
    _default_inpaint,
    apply_case,
)

MANIFEST_FORMAT = "docforge-manifest"
MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.jsonl"
# Re-draw rounds across the document pool before a quota is unreachable.
BACKFILL_ROUNDS = 4

# Built-in accounting of the full-scale corpus: CaseKey -> (train, test).
FULL_SCALE_COUNTS: dict[CaseKey, tuple[int, int]] = {
    CaseKey(EditPattern.TEXT_REMOVAL, MethodFamily.COPY_MOVE): (5796, 728),
    CaseKey(EditPattern.TEXT_REMOVAL, MethodFamily.GENERATIVE): (6122, 798),
    CaseKey(EditPattern.TEXT_REPLACEMENT, MethodFamily.COPY_MOVE): (3019, 394),
    CaseKey(EditPattern.TEXT_REPLACEMENT, MethodFamily.MIX): (6088, 790),
    CaseKey(EditPattern.TEXT_REPLACEMENT, MethodFamily.GENERATIVE): (3061, 399),
    CaseKey(EditPattern.BACKGROUND_ADDITION, MethodFamily.COPY_MOVE): (5598, 704),
    CaseKey(EditPattern.BACKGROUND_ADDITION, MethodFamily.GENERATIVE): (5598, 704),
    CaseKey(EditPattern.TEXT_ADDITION, MethodFamily.COPY_MOVE): (5796, 728),
    CaseKey(EditPattern.TEXT_ADDITION, MethodFamily.GENERATIVE): (5796, 728),
}
FULL_SCALE_TOTALS = (
    sum(t for t, _ in FULL_SCALE_COUNTS.values()),
    sum(t for _, t in FULL_SCALE_COUNTS.values()),
)


class Split(Enum):
    TRAIN = "train"
    TEST = "test"


class MaskStyle(Enum):
    CHANGED_PIXELS = "changed_pixels"
    BOUNDING_RECT = "bounding_rect"


@dataclass(frozen=True)
class BuildConfig:
    """Everything a build depends on besides the corpus itself."""

    case_counts: dict[CaseKey, tuple[int, int]]
    master_seed: int = 0
    target_policy: TargetPolicy = field(default_factory=AnyWord)
    mask_style: MaskStyle = MaskStyle.CHANGED_PIXELS
    bridge: Optional[BridgeConfig] = None
    test_doc_share: float = 0.25
    declared_totals: Optional[tuple[int, int]] = None

    def __post_init__(self):
        if not self.case_counts:
            raise ValueError("case_counts must not be empty")
        for case, (train, test) in self.case_counts.items():
            if train < 0 or test < 0:
                raise ValueError(f"negative count for {case}")
        if all(t == 0 and s == 0 for t, s in self.case_counts.values()):
            raise ValueError("at least one case count must be nonzero")
        if not (0.0 < self.test_doc_share < 1.0):
            raise ValueError("test_doc_share must be in (0, 1)")

    def split_totals(self) -> tuple[int, int]:
        return (
            sum(t for t, _ in self.case_counts.values()),
            sum(s for _, s in self.case_counts.values()),
        )


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def scaled_counts(
    scale: float, mode: str = "round_per_case"
) -> tuple[dict[CaseKey, tuple[int, int]], tuple[int, int]]:
    """Shrink the full-scale accounting to a fraction of its size.

    The declared split totals are the rounded scaled totals; per-case
    counts are then rounded against the effective per-split ratio
    declared_total / full_total. round_per_case rounds each cell
    independently (cells may sum slightly off the declared total);
    largest_remainder apportions the declared total exactly.
    """
    if not (0.0 < scale <= 1.0):
        raise ValueError("scale must be in (0, 1]")
    declared = (
        _round_half_up(FULL_SCALE_TOTALS[0] * scale),
        _round_half_up(FULL_SCALE_TOTALS[1] * scale),
    )
    cases = sorted(FULL_SCALE_COUNTS, key=str)
    out: dict[CaseKey, tuple[int, int]] = {}
    if mode == "round_per_case":
        for case in cases:
            pair = []
            for s in (0, 1):
                ratio = declared[s] / FULL_SCALE_TOTALS[s]
                pair.append(_round_half_up(FULL_SCALE_COUNTS[case][s] * ratio))
            out[case] = (pair[0], pair[1])
    elif mode == "largest_remainder":
        cols: list[list[int]] = []
        for s in (0, 1):
            quotas = [
                FULL_SCALE_COUNTS[c][s] * declared[s] / FULL_SCALE_TOTALS[s]
                for c in cases
            ]
            base = [math.floor(q) for q in quotas]
            seats = declared[s] - sum(base)
            order = sorted(
                range(len(cases)), key=lambda i: (-(quotas[i] - base[i]), str(cases[i]))
            )
            for i in order[:seats]:
                base[i] += 1
            cols.append(base)
        for i, case in enumerate(cases):
            out[case] = (cols[0][i], cols[1][i])
    else:
        raise ValueError(f"unknown scaling mode: {mode!r}")
    return out, declared


def _seed_bytes(*parts) -> int:
    text = "|".join(str(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def sample_seed(
    master_seed: int, doc_id: str, case: CaseKey, split: Split, index: int, attempt: int = 0
) -> int:
    return _seed_bytes(master_seed, doc_id, case, split.value, index, attempt)


def split_documents(
    doc_ids: Iterable[str], master_seed: int, test_share: float
) -> tuple[list[str], list[str]]:
    """Disjoint train/test document pools, stable under corpus order."""
    ids = sorted(doc_ids)
    if not ids:
        raise EmptyCorpus("no documents to split")
    if len(ids) == 1:
        return ids, ids[:]  # too small to isolate; callers get both pools
    rng = np.random.default_rng(_seed_bytes(master_seed, "doc-split"))
    perm = [ids[int(i)] for i in rng.permutation(len(ids))]
    n_test = min(max(1, _round_half_up(len(ids) * test_share)), len(ids) - 1)
    test = sorted(perm[:n_test])
    train = sorted(perm[n_test:])
    return train, test


@dataclass(frozen=True)
class ManifestEntry:
    case: CaseKey
    split: Split
    doc_id: str
    index: int
    forged_path: str  # POSIX, relative to the manifest directory
    mask_path: str
    record: EditRecord

    def sort_key(self):
        return (str(self.case), self.split.value, self.doc_id, self.index)


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    config_hash: str
    tool_version: str
    mask_style: MaskStyle
    root: Optional[Path] = None  # directory the paths are relative to

    @property
    def n_entries(self) -> int:
        return len(self.entries)

    def resolve(self, rel: str) -> Path:
        if self.root is None:
            raise ManifestError("manifest has no root directory to resolve against")
        return self.root / PurePosixPath(rel)

    def original_path(self, doc_id: str) -> Path:
        return self.resolve(f"originals/{doc_id}.png")


def config_hash(config: BuildConfig) -> str:
    payload = {
        "case_counts": {str(k): list(v) for k, v in sorted(config.case_counts.items(), key=lambda kv: str(kv[0]))},
        "master_seed": config.master_seed,
        "target_policy": repr(config.target_policy),
        "mask_style": config.mask_style.value,
        "bridge": list(config.bridge.command) if config.bridge else None,
        "test_doc_share": config.test_doc_share,
        "declared_totals": list(config.declared_totals) if config.declared_totals else None,
    }
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _record_to_dict(record: EditRecord) -> dict:
    def region(r: Optional[Region]):
        return None if r is None else [r.x, r.y, r.w, r.h]

    return {
        "case": str(record.case),
        "target_region": region(record.target_region),
        "source_region": region(record.source_region),
        "seed": record.seed,
        "generator": record.generator.value,
        "params": record.params,
    }


def _record_from_dict(data: dict) -> EditRecord:
    def region(v):
        return None if v is None else Region(*v)

    return EditRecord(
        case=CaseKey.parse(data["case"]),
        target_region=region(data["target_region"]),
        source_region=region(data["source_region"]),
        seed=int(data["seed"]),
        generator=GeneratorKind(data["generator"]),
        params=dict(data["params"]),
    )


def _entry_to_line(entry: ManifestEntry) -> str:
    payload = {
        "case": str(entry.case),
        "split": entry.split.value,
        "doc_id": entry.doc_id,
        "index": entry.index,
        "forged_path": entry.forged_path,
        "mask_path": entry.mask_path,
        "record": _record_to_dict(entry.record),
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def write_manifest(manifest: DatasetManifest, path: Path) -> None:
    path = Path(path)
    header = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "config_hash": manifest.config_hash,
        "tool_version": manifest.tool_version,
        "mask_style": manifest.mask_style.value,
        "n_entries": manifest.n_entries,
    }
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    lines.extend(_entry_to_line(e) for e in sorted(manifest.entries, key=ManifestEntry.sort_key))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: Path) -> DatasetManifest:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ManifestError(f"cannot read manifest: {e}")
    if not lines:
        raise ManifestError("manifest is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise ManifestError(f"manifest header is not valid JSON: {e}")
    if not isinstance(header, dict) or header.get("format") != MANIFEST_FORMAT:
        raise ManifestError("not a dataset manifest")
    if header.get("version") != MANIFEST_VERSION:
        raise ManifestError(f"unsupported manifest version: {header.get('version')!r}")
    entries = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            entries.append(
                ManifestEntry(
                    case=CaseKey.parse(data["case"]),
                    split=Split(data["split"]),
                    doc_id=data["doc_id"],
                    index=int(data["index"]),
                    forged_path=data["forged_path"],
                    mask_path=data["mask_path"],
                    record=_record_from_dict(data["record"]),
                )
            )
        except (KeyError, ValueError, TypeError, json.JSONDecodeError) as e:
            raise ManifestError(f"bad manifest entry on line {i}: {e}")
    if len(entries) != header.get("n_entries"):
        raise ManifestError(
            f"header declares {header.get('n_entries')} entries, found {len(entries)}"
        )
    return DatasetManifest(
        entries=tuple(entries),
        config_hash=header["config_hash"],
        tool_version=header["tool_version"],
        mask_style=MaskStyle(header["mask_style"]),
        root=path.parent,
    )


def _case_dir(case: CaseKey) -> str:
    return f"{case.pattern.value}_{case.method.value}"


def _mask_to_png(mask: np.ndarray, path: Path) -> None:
    from PIL import Image

    Image.fromarray((mask * 255).astype(np.uint8), mode="L").save(path, format="PNG")


def load_mask_png(path: Path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    bad = ~np.isin(arr, (0, 255))
    if bad.any():
        raise VerificationError(f"mask {path} has values outside {{0, 255}}")
    return (arr == 255).astype(np.uint8)


def bounding_rect_mask(mask: np.ndarray) -> np.ndarray:
    """Fill the tight bounding rectangle of the set pixels."""
    ys, xs = np.nonzero(mask)
    out = np.zeros_like(mask)
    if ys.size:
        out[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1] = 1
    return out


def _generate_one(
    case: CaseKey,
    split: Split,
    index: int,
    pool: list[str],
    docs: dict[str, tuple[DocumentImage, OcrAnnotation]],
    config: BuildConfig,
    inpaint_fn,
) -> tuple[str, DocumentImage, np.ndarray, EditRecord]:
    """One dataset entry, retrying across documents and attempt rounds."""
    n = len(pool)
    last: Optional[Exception] = None
    for attempt in range(BACKFILL_ROUNDS):
        for j in range(n):
            doc_id = pool[(index + j) % n]
            image, annot = docs[doc_id]
            seed = sample_seed(config.master_seed, doc_id, case, split, index, attempt)
            rng = np.random.default_rng(seed)
            try:
                forged, mask, record = apply_case(
                    case, image, annot, rng,
                    policy=config.target_policy, inpaint=inpaint_fn,
                )
            except (DegenerateSample, NoBlankRegion, NoDonorWord, NoMatchingTarget) as e:
                last = e
                continue
            record = replace(record, seed=seed)
            if config.bridge is not None and case.method in (
                MethodFamily.GENERATIVE, MethodFamily.MIX,
            ):
                record = replace(record, generator=GeneratorKind.EXTERNAL_BRIDGE)
            return doc_id, forged, mask.labels, record
    raise QuotaUnreachable(
        f"{case} {split.value} sample {index}: every document rejected "
        f"after {BACKFILL_ROUNDS} rounds ({last})"
    )


def build_dataset(
    config: BuildConfig,
    corpus: list[tuple[DocumentImage, OcrAnnotation]],
    out_dir: Path,
    progress: Optional[Callable[[str], None]] = None,
    jobs: int = 1,
) -> DatasetManifest:
    """Generate the full dataset tree and return its manifest.

    Also writes the manifest to {out_dir}/manifest.jsonl and every source
    document to {out_dir}/originals/, which the verify pass diffs against.
    """
    if not corpus:
        raise EmptyCorpus("cannot build from an empty corpus")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        raise OutputUnwritable(f"cannot write under {out_dir}: {e}")

    docs = {img.id: (img, annot) for img, annot in corpus}
    if len(docs) != len(corpus):
        raise EmptyCorpus("duplicate document ids in corpus")
    train_pool, test_pool = split_documents(docs, config.master_seed, config.test_doc_share)
    pools = {Split.TRAIN: train_pool, Split.TEST: test_pool}

    inpaint_fn = bridged_inpaint(config.bridge) if config.bridge else _default_inpaint

    originals_dir = out_dir / "originals"
    originals_dir.mkdir(exist_ok=True)
    needed_splits = [
        s for i, s in enumerate(Split)
        if any(counts[i] > 0 for counts in config.case_counts.values())
    ]
    used_docs = set()
    for s in needed_splits:
        used_docs.update(pools[s])
    for doc_id in sorted(used_docs):
        docs[doc_id][0].save(originals_dir / f"{doc_id}.png")

    entries: list[ManifestEntry] = []
    for case in sorted(config.case_counts, key=str):
        train_n, test_n = config.case_counts[case]
        for split, count in ((Split.TRAIN, train_n), (Split.TEST, test_n)):
            if count == 0:
                continue
            case_dir = out_dir / _case_dir(case) / split.value
            case_dir.mkdir(parents=True, exist_ok=True)

            def one(index, case=case, split=split):
                return index, _generate_one(
                    case, split, index, pools[split], docs, config, inpaint_fn
                )

            if jobs > 1:
                from concurrent.futures import ThreadPoolExecutor

                with ThreadPoolExecutor(max_workers=jobs) as pool:
                    produced = sorted(pool.map(one, range(count)))
            else:
                produced = [one(i) for i in range(count)]
            # Writes happen here, in index order, so trees are identical
            # for any worker count.
            for index, (doc_id, forged, mask, record) in produced:
                if config.mask_style is MaskStyle.BOUNDING_RECT:
                    mask = bounding_rect_mask(mask)
                stem = f"{doc_id}_{index:04d}"
                forged.save(case_dir / f"{stem}.png")
                _mask_to_png(mask, case_dir / f"{stem}_mask.png")
                rel = PurePosixPath(_case_dir(case)) / split.value / stem
                entries.append(
                    ManifestEntry(
                        case=case, split=split, doc_id=doc_id, index=index,
                        forged_path=str(rel) + ".png",
                        mask_path=str(rel) + "_mask.png",
                        record=record,
                    )
                )
            if progress:
                progress(f"{case} {split.value}: {count} samples")

    manifest = DatasetManifest(
        entries=tuple(sorted(entries, key=ManifestEntry.sort_key)),
        config_hash=config_hash(config),
        tool_version=__version__,
        mask_style=config.mask_style,
        root=out_dir,
    )
    write_manifest(manifest, out_dir / MANIFEST_NAME)
    return manifest


def compute_stats(manifest: DatasetManifest) -> dict:
    """Per-case-per-split counts plus split totals."""
    table: dict[str, dict[str, int]] = {}
    for entry in manifest.entries:
        row = table.setdefault(str(entry.case), {s.value: 0 for s in Split})
        row[entry.split.value] += 1
    totals = {s.value: sum(row[s.value] for row in table.values()) for s in Split}
    return {"cases": table, "totals": totals, "n_entries": manifest.n_entries}


def format_stats(stats: dict) -> str:
    rows = sorted(stats["cases"].items())
    width = max([len("case")] + [len(name) for name, _ in rows])
    lines = [f"{'case':<{width}}  {'train':>7}  {'test':>7}"]
    for name, row in rows:
        lines.append(f"{name:<{width}}  {row['train']:>7}  {row['test']:>7}")
    t = stats["totals"]
    lines.append(f"{'total':<{width}}  {t['train']:>7}  {t['test']:>7}")
    return "\n".join(lines)


def filter_subset(
    manifest: DatasetManifest,
    predicate: Callable[[CaseKey], bool],
    cap: int,
    seed: int,
) -> DatasetManifest:
    """Uniform deterministic subsample of entries whose case matches."""
    if cap <= 0:
        raise ValueError("cap must be positive")
    matching = [e for e in manifest.entries if predicate(e.case)]
    if not matching:
        raise EmptySelectionError("predicate matches no manifest entries")
    matching.sort(key=ManifestEntry.sort_key)
    if len(matching) > cap:
        rng = np.random.default_rng(_seed_bytes(seed, "filter-subset"))
        picked = rng.choice(len(matching), size=cap, replace=False)
        matching = [matching[int(i)] for i in sorted(picked)]
    return DatasetManifest(
        entries=tuple(matching),
        config_hash=manifest.config_hash,
        tool_version=manifest.tool_version,
        mask_style=manifest.mask_style,
        root=manifest.root,
    )


def verify_dataset(
    manifest: DatasetManifest, progress: Optional[Callable[[str], None]] = None
) -> int:
    """Re-check every invariant the builder promises; return entries checked.

    Raises VerificationError on the first violation.
    """
    if manifest.root is None:
        raise VerificationError("manifest must be loaded from disk to verify")
    originals: dict[str, np.ndarray] = {}
    for i, entry in enumerate(manifest.entries):
        forged_p = manifest.resolve(entry.forged_path)
        mask_p = manifest.resolve(entry.mask_path)
        for p in (forged_p, mask_p):
            if not p.is_file():
                raise VerificationError(f"missing file: {p}")
        if entry.doc_id not in originals:
            op = manifest.original_path(entry.doc_id)
            if not op.is_file():
                raise VerificationError(f"missing original image: {op}")
            originals[entry.doc_id] = DocumentImage.load(op, id=entry.doc_id).pixels
        original = originals[entry.doc_id]
        forged = DocumentImage.load(forged_p, id=entry.doc_id).pixels
        mask = load_mask_png(mask_p)
        if forged.shape != original.shape or mask.shape != original.shape[:2]:
            raise VerificationError(f"dimension mismatch for {entry.forged_path}")
        diff = changed_pixels(original, forged)
        if manifest.mask_style is MaskStyle.CHANGED_PIXELS:
            if not np.array_equal(diff, mask):
                raise VerificationError(
                    f"{entry.forged_path}: forged image does not differ from the "
                    f"original exactly on the mask"
                )
        else:
            if not np.array_equal(bounding_rect_mask(diff), mask):
                raise VerificationError(
                    f"{entry.forged_path}: mask is not the bounding rectangle "
                    f"of the changed pixels"
                )
        fraction = float(mask.mean())
        if not (0.0 < fraction < 0.5):
            raise VerificationError(
                f"{entry.forged_path}: forged fraction {fraction:.4f} outside (0, 0.5)"
            )
        if progress and (i + 1) % 100 == 0:
            progress(f"verified {i + 1}/{manifest.n_entries}")
    stats = compute_stats(manifest)
    if stats["totals"]["train"] + stats["totals"]["test"] != manifest.n_entries:
        raise VerificationError("per-case counts do not sum to total entries")
    return manifest.n_entries
