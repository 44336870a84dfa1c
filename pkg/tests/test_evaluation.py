import shutil
from pathlib import Path

import numpy as np
import pytest

from docforge.builder import Split, load_mask_png
from docforge.errors import DimensionMismatch
from docforge.evaluation import (
    ConfusionCounts,
    confusion,
    evaluate_repeats,
    evaluate_run,
    format_report,
    iou_authentic,
    iou_forged,
    miou,
    prediction_mask,
)
from docforge.patterns import ForgeryMask
from oracles import confusion_loop, miou_from_loop


def _mask(arr):
    return ForgeryMask(np.asarray(arr, dtype=np.uint8))


def test_confusion_counts_validation():
    with pytest.raises(ValueError):
        ConfusionCounts(tp=-1)
    c = ConfusionCounts(1, 2, 3, 4)
    assert c.total == 10
    assert (c + c) == ConfusionCounts(2, 4, 6, 8)


def test_confusion_matches_loop_oracle(rng):
    for _ in range(25):
        h, w = int(rng.integers(2, 33)), int(rng.integers(2, 33))
        pred = _mask(rng.integers(0, 2, size=(h, w)))
        gt = _mask(rng.integers(0, 2, size=(h, w)))
        c = confusion(pred, gt)
        assert (c.tp, c.fp, c.fn, c.tn) == confusion_loop(pred.labels, gt.labels)


def test_confusion_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        confusion(_mask(np.zeros((4, 4))), _mask(np.zeros((4, 5))))


def test_miou_closed_forms():
    gt = np.zeros((100, 100), dtype=np.uint8)
    gt[:5, :100] = 1  # forged fraction 0.05
    all_auth = confusion(_mask(np.zeros_like(gt)), _mask(gt))
    assert miou(all_auth) == pytest.approx(0.475, abs=1e-12)  # (1-f)/2
    all_forged = confusion(_mask(np.ones_like(gt)), _mask(gt))
    assert miou(all_forged) == pytest.approx(0.025, abs=1e-12)  # f/2
    perfect = confusion(_mask(gt), _mask(gt))
    assert miou(perfect) == 1.0


def test_miou_empty_class_convention():
    both_empty = confusion(_mask(np.zeros((8, 8))), _mask(np.zeros((8, 8))))
    assert iou_forged(both_empty) == 1.0
    assert miou(both_empty) == 1.0
    both_full = confusion(_mask(np.ones((8, 8))), _mask(np.ones((8, 8))))
    assert iou_authentic(both_full) == 1.0
    assert miou(both_full) == 1.0


def test_miou_class_relabel_symmetry(rng):
    for _ in range(10):
        pred = _mask(rng.integers(0, 2, size=(16, 16)))
        gt = _mask(rng.integers(0, 2, size=(16, 16)))
        c = confusion(pred, gt)
        flipped = confusion(
            _mask(1 - pred.labels), _mask(1 - gt.labels)
        )
        assert miou(c) == pytest.approx(miou(flipped), abs=1e-15)


def test_miou_matches_loop_oracle(rng):
    for _ in range(25):
        pred = _mask(rng.integers(0, 2, size=(20, 20)))
        gt = _mask((rng.random((20, 20)) < 0.1).astype(np.uint8))
        assert miou(confusion(pred, gt)) == pytest.approx(
            miou_from_loop(pred.labels, gt.labels), abs=1e-12
        )


def _copy_gt_predictions(manifest, dest, split=Split.TEST):
    dest = Path(dest)
    for entry in manifest.entries:
        if entry.split is split:
            target = dest / entry.forged_path
            target.parent.mkdir(parents=True, exist_ok=True)
            shutil.copy(manifest.resolve(entry.mask_path), target)


def test_evaluate_run_ground_truth_copies(small_dataset, tmp_path):
    _, manifest, _ = small_dataset
    preds = tmp_path / "gt_copies"
    _copy_gt_predictions(manifest, preds)
    report = evaluate_run(manifest, preds)
    assert report.n_samples == 9
    assert not report.errors
    for score in report.per_case.values():
        assert score.miou == 1.0
    assert report.overall == 1.0
    assert "average" in format_report(report)


def test_evaluate_run_all_authentic_closed_form(small_dataset, tmp_path):
    _, manifest, _ = small_dataset
    preds = tmp_path / "none"
    preds.mkdir()
    report = evaluate_run(manifest, preds, allow_missing=True)
    fractions = {}
    for entry in manifest.entries:
        if entry.split is Split.TEST:
            gt = load_mask_png(manifest.resolve(entry.mask_path))
            fractions.setdefault(str(entry.case), []).append(gt.mean())
    for name, score in report.per_case.items():
        expected = float(np.mean([(1 - f) / 2 for f in fractions[name]]))
        assert score.miou == pytest.approx(expected, abs=1e-12)
        assert score.iou_forged == 0.0


def test_evaluate_run_missing_is_error(small_dataset, tmp_path):
    _, manifest, _ = small_dataset
    preds = tmp_path / "nothing"
    preds.mkdir()
    report = evaluate_run(manifest, preds)
    assert len(report.errors) == 9
    assert report.per_case == {}


def test_evaluate_run_flat_layout_accepted(small_dataset, tmp_path):
    # one case only, so flat stems cannot collide
    _, manifest, _ = small_dataset
    from docforge.builder import filter_subset
    from docforge.patterns import CaseKey

    one_case = filter_subset(
        manifest, lambda c: c == CaseKey.parse("text_removal/copy_move"),
        cap=100, seed=0,
    )
    preds = tmp_path / "flat"
    preds.mkdir()
    for entry in one_case.entries:
        if entry.split is Split.TEST:
            shutil.copy(
                one_case.resolve(entry.mask_path),
                preds / Path(entry.forged_path).name,
            )
    report = evaluate_run(one_case, preds)
    assert report.overall == 1.0 and not report.errors


def test_evaluate_run_pooled_mode(small_dataset, tmp_path):
    _, manifest, _ = small_dataset
    preds = tmp_path / "none2"
    preds.mkdir()
    pooled = evaluate_run(manifest, preds, allow_missing=True, pooled=True)
    for name, score in pooled.per_case.items():
        gts = [
            load_mask_png(manifest.resolve(e.mask_path))
            for e in manifest.entries
            if e.split is Split.TEST and str(e.case) == name
        ]
        tn = sum(int((g == 0).sum()) for g in gts)
        fn = sum(int(g.sum()) for g in gts)
        assert score.miou == pytest.approx((0 + tn / (tn + fn)) / 2, abs=1e-12)


def test_evaluate_run_weighted_overall(small_dataset, tmp_path):
    _, manifest, _ = small_dataset
    preds = tmp_path / "none3"
    preds.mkdir()
    report = evaluate_run(manifest, preds, allow_missing=True)
    weights = np.array([s.n for s in report.per_case.values()], dtype=float)
    mious = np.array([s.miou for s in report.per_case.values()])
    assert report.overall == pytest.approx(float(mious.mean()), abs=1e-15)
    assert report.overall_weighted == pytest.approx(
        float((mious * weights).sum() / weights.sum()), abs=1e-15
    )


def test_evaluate_repeats_averages(small_dataset, tmp_path):
    _, manifest, _ = small_dataset
    a = tmp_path / "ra"
    b = tmp_path / "rb"
    _copy_gt_predictions(manifest, a)
    b.mkdir()
    merged = evaluate_repeats(manifest, [a, b], allow_missing=True)
    single_a = evaluate_run(manifest, a, allow_missing=True)
    single_b = evaluate_run(manifest, b, allow_missing=True)
    assert merged.overall == pytest.approx(
        (single_a.overall + single_b.overall) / 2, abs=1e-12
    )
    for name, score in merged.per_case.items():
        assert score.miou == pytest.approx(
            (single_a.per_case[name].miou + single_b.per_case[name].miou) / 2,
            abs=1e-12,
        )


def test_prediction_mask_thresholds_probability_rasters(tmp_path):
    from PIL import Image

    arr = np.array([[0, 100, 127], [128, 200, 255]], dtype=np.uint8)
    p = tmp_path / "prob.png"
    Image.fromarray(arr, mode="L").save(p)
    mask = prediction_mask(p, (2, 3))
    assert mask.labels.tolist() == [[0, 0, 0], [1, 1, 1]]
    with pytest.raises(DimensionMismatch):
        prediction_mask(p, (3, 3))


def test_report_json_round_trip(small_dataset, tmp_path):
    import json

    _, manifest, _ = small_dataset
    preds = tmp_path / "gt4"
    _copy_gt_predictions(manifest, preds)
    report = evaluate_run(manifest, preds)
    data = json.loads(report.to_json())
    assert data["overall"] == 1.0
    assert set(data["per_case"]) == set(report.per_case)
