"""Two-class forgery-localization scoring.

Predictions and ground truth are per-pixel binary masks (forged vs
authentic). Each sample reduces to a confusion-count quadruple; IoU is
computed per class with the convention that a class absent from both
masks scores 1, and mIoU is the mean of the two class IoUs. Per-case
scores average per-sample mIoU by default; a pooled mode accumulates
counts across samples first.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .builder import DatasetManifest, Split, load_mask_png
from .errors import DimensionMismatch, MissingPrediction
from .patterns import CaseKey, ForgeryMask

# Probability rasters are cut at this level (0.5 of full scale).
PREDICTION_THRESHOLD = 128


@dataclass(frozen=True)
class ConfusionCounts:
    """Pixel tallies with forged as the positive class."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp,
            self.fn + other.fn, self.tn + other.tn,
        )


def confusion(pred: ForgeryMask, gt: ForgeryMask) -> ConfusionCounts:
    if pred.labels.shape != gt.labels.shape:
        raise DimensionMismatch(
            f"prediction is {pred.labels.shape}, ground truth is {gt.labels.shape}"
        )
    p = pred.labels.astype(bool)
    g = gt.labels.astype(bool)
    return ConfusionCounts(
        tp=int((p & g).sum()),
        fp=int((p & ~g).sum()),
        fn=int((~p & g).sum()),
        tn=int((~p & ~g).sum()),
    )


def iou_forged(c: ConfusionCounts) -> float:
    denom = c.tp + c.fp + c.fn
    return 1.0 if denom == 0 else c.tp / denom


def iou_authentic(c: ConfusionCounts) -> float:
    denom = c.tn + c.fp + c.fn
    return 1.0 if denom == 0 else c.tn / denom


def miou(c: ConfusionCounts) -> float:
    if c.total <= 0:
        raise ValueError("confusion counts cover no pixels")
    return (iou_forged(c) + iou_authentic(c)) / 2.0


@dataclass(frozen=True)
class CaseScore:
    miou: float
    iou_authentic: float
    iou_forged: float
    n: int


@dataclass(frozen=True)
class EvalReport:
    per_case: dict[str, CaseScore]
    overall: float  # unweighted mean of per-case mIoU
    overall_weighted: float  # sample-weighted alternative
    n_samples: int
    pooled: bool
    errors: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "per_case": {
                k: {
                    "miou": s.miou,
                    "iou_authentic": s.iou_authentic,
                    "iou_forged": s.iou_forged,
                    "n": s.n,
                }
                for k, s in sorted(self.per_case.items())
            },
            "overall": self.overall,
            "overall_weighted": self.overall_weighted,
            "n_samples": self.n_samples,
            "pooled": self.pooled,
            "errors": list(self.errors),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def format_report(report: EvalReport) -> str:
    rows = sorted(report.per_case.items())
    width = max([len("case")] + [len(k) for k, _ in rows])
    lines = [
        f"{'case':<{width}}  {'mIoU':>7}  {'IoU auth':>9}  {'IoU forg':>9}  {'n':>5}"
    ]
    for name, s in rows:
        lines.append(
            f"{name:<{width}}  {s.miou:>7.4f}  {s.iou_authentic:>9.4f}  "
            f"{s.iou_forged:>9.4f}  {s.n:>5}"
        )
    lines.append(f"{'average':<{width}}  {report.overall:>7.4f}")
    if report.errors:
        lines.append(f"errors: {len(report.errors)}")
    return "\n".join(lines)


def prediction_mask(path: Path, shape: tuple[int, int]) -> ForgeryMask:
    """Read a prediction raster; binary or probability, thresholded at 0.5."""
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    if arr.shape != shape:
        raise DimensionMismatch(f"{path}: prediction is {arr.shape}, expected {shape}")
    return ForgeryMask((arr >= PREDICTION_THRESHOLD).astype(np.uint8))


def _score_case(samples: list[ConfusionCounts], pooled: bool) -> CaseScore:
    if pooled:
        agg = ConfusionCounts()
        for c in samples:
            agg = agg + c
        return CaseScore(
            miou=miou(agg), iou_authentic=iou_authentic(agg),
            iou_forged=iou_forged(agg), n=len(samples),
        )
    return CaseScore(
        miou=float(np.mean([miou(c) for c in samples])),
        iou_authentic=float(np.mean([iou_authentic(c) for c in samples])),
        iou_forged=float(np.mean([iou_forged(c) for c in samples])),
        n=len(samples),
    )


def evaluate_run(
    manifest: DatasetManifest,
    predictions_dir: Path,
    split: Split = Split.TEST,
    allow_missing: bool = False,
    pooled: bool = False,
    weighted_overall: bool = False,
) -> EvalReport:
    """Score one directory of prediction masks against the ground truth.

    The prediction for a forged image lives at the same relative path
    under predictions_dir ({case}/{split}/{stem}.png); a flat
    {predictions_dir}/{stem}.png is also accepted, but stems are only
    unique within one case directory, so the mirrored layout is the safe
    one. Missing predictions are errors unless allow_missing, in which
    case they score as all-authentic.
    """
    predictions_dir = Path(predictions_dir)
    per_case_counts: dict[str, list[ConfusionCounts]] = {}
    errors: list[str] = []
    n_samples = 0
    for entry in manifest.entries:
        if entry.split is not split:
            continue
        n_samples += 1
        gt = ForgeryMask(load_mask_png(manifest.resolve(entry.mask_path)))
        pred_path = predictions_dir / Path(entry.forged_path)
        if not pred_path.is_file():
            pred_path = predictions_dir / Path(entry.forged_path).name
        try:
            if pred_path.is_file():
                pred = prediction_mask(pred_path, gt.labels.shape)
            elif allow_missing:
                pred = ForgeryMask(np.zeros_like(gt.labels))
            else:
                raise MissingPrediction(f"no prediction for {entry.forged_path}")
        except (MissingPrediction, DimensionMismatch) as e:
            errors.append(str(e))
            continue
        per_case_counts.setdefault(str(entry.case), []).append(confusion(pred, gt))

    per_case = {
        name: _score_case(samples, pooled)
        for name, samples in per_case_counts.items()
    }
    if per_case:
        overall = float(np.mean([s.miou for s in per_case.values()]))
        weights = np.array([s.n for s in per_case.values()], dtype=float)
        mious = np.array([s.miou for s in per_case.values()])
        overall_weighted = float((mious * weights).sum() / weights.sum())
    else:
        overall = overall_weighted = 0.0
    return EvalReport(
        per_case=per_case,
        overall=overall_weighted if weighted_overall else overall,
        overall_weighted=overall_weighted,
        n_samples=n_samples,
        pooled=pooled,
        errors=tuple(errors),
    )


def evaluate_repeats(
    manifest: DatasetManifest,
    prediction_dirs: list[Path],
    **kwargs,
) -> EvalReport:
    """Average several runs' reports (repeat-average mode).

    Per-case and overall scores are the arithmetic means of the individual
    runs; n reflects one run.
    """
    if not prediction_dirs:
        raise ValueError("need at least one predictions directory")
    reports = [evaluate_run(manifest, d, **kwargs) for d in prediction_dirs]
    keys = sorted({k for r in reports for k in r.per_case})
    per_case = {}
    for k in keys:
        scores = [r.per_case[k] for r in reports if k in r.per_case]
        per_case[k] = CaseScore(
            miou=float(np.mean([s.miou for s in scores])),
            iou_authentic=float(np.mean([s.iou_authentic for s in scores])),
            iou_forged=float(np.mean([s.iou_forged for s in scores])),
            n=scores[0].n,
        )
    return EvalReport(
        per_case=per_case,
        overall=float(np.mean([r.overall for r in reports])),
        overall_weighted=float(np.mean([r.overall_weighted for r in reports])),
        n_samples=reports[0].n_samples,
        pooled=reports[0].pooled,
        errors=tuple(e for r in reports for e in r.errors),
    )
