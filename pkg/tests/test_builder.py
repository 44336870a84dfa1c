import subprocess

import numpy as np
import pytest

from docforge.builder import (
    FULL_SCALE_COUNTS,
    FULL_SCALE_TOTALS,
    BuildConfig,
    DatasetManifest,
    MaskStyle,
    Split,
    bounding_rect_mask,
    build_dataset,
    compute_stats,
    config_hash,
    filter_subset,
    format_stats,
    load_mask_png,
    read_manifest,
    sample_seed,
    scaled_counts,
    split_documents,
    verify_dataset,
    write_manifest,
)
from docforge.corpus import DocumentImage, OcrAnnotation, Region, WordBox
from docforge.errors import (
    EmptyCorpus,
    EmptySelectionError,
    ManifestError,
    OutputUnwritable,
    QuotaUnreachable,
    VerificationError,
)
from docforge.patterns import CaseKey, EditPattern, MethodFamily


def _trees_identical(a, b) -> bool:
    result = subprocess.run(
        ["diff", "-r", str(a), str(b)], capture_output=True, text=True
    )
    return result.returncode == 0


def test_full_scale_totals():
    assert FULL_SCALE_TOTALS == (46874, 5973)
    assert len(FULL_SCALE_COUNTS) == 9


def test_scaled_counts_strict_rounding():
    counts, declared = scaled_counts(0.01)
    assert declared == (469, 60)
    for case, (train_full, test_full) in FULL_SCALE_COUNTS.items():
        assert counts[case] == (
            round(train_full * 469 / 46874),
            round(test_full * 60 / 5973),
        )
    assert sum(t for t, _ in counts.values()) == 469


def test_scaled_counts_largest_remainder_hits_totals():
    counts, declared = scaled_counts(0.01, mode="largest_remainder")
    assert sum(t for t, _ in counts.values()) == declared[0] == 469
    assert sum(t for _, t in counts.values()) == declared[1] == 60


def test_scaled_counts_full_scale_is_identity():
    counts, declared = scaled_counts(1.0)
    assert counts == FULL_SCALE_COUNTS
    assert declared == FULL_SCALE_TOTALS


def test_scaled_counts_rejects_bad_input():
    with pytest.raises(ValueError):
        scaled_counts(0.0)
    with pytest.raises(ValueError):
        scaled_counts(0.01, mode="banker")


def test_build_config_validation():
    case = CaseKey(EditPattern.TEXT_REMOVAL, MethodFamily.COPY_MOVE)
    with pytest.raises(ValueError):
        BuildConfig(case_counts={})
    with pytest.raises(ValueError):
        BuildConfig(case_counts={case: (-1, 0)})
    with pytest.raises(ValueError):
        BuildConfig(case_counts={case: (0, 0)})
    with pytest.raises(ValueError):
        BuildConfig(case_counts={case: (1, 1)}, test_doc_share=1.5)


def test_sample_seed_properties():
    case = CaseKey(EditPattern.TEXT_ADDITION, MethodFamily.GENERATIVE)
    base = sample_seed(7, "doc_a", case, Split.TRAIN, 0)
    assert base == sample_seed(7, "doc_a", case, Split.TRAIN, 0)
    assert base != sample_seed(8, "doc_a", case, Split.TRAIN, 0)
    assert base != sample_seed(7, "doc_b", case, Split.TRAIN, 0)
    assert base != sample_seed(7, "doc_a", case, Split.TEST, 0)
    assert base != sample_seed(7, "doc_a", case, Split.TRAIN, 1)
    assert base != sample_seed(7, "doc_a", case, Split.TRAIN, 0, attempt=1)
    assert 0 <= base < 2**64


def test_split_documents_disjoint_and_stable():
    ids = [f"d{i}" for i in range(10)]
    train, test = split_documents(ids, master_seed=3, test_share=0.25)
    assert sorted(train + test) == sorted(ids)
    assert not (set(train) & set(test))
    assert len(test) == 3  # round(10 * 0.25), clamped to [1, 9]
    assert (train, test) == split_documents(reversed(ids), 3, 0.25)
    assert (train, test) != split_documents(ids, master_seed=4, test_share=0.25)


def test_split_documents_single_doc():
    train, test = split_documents(["only"], master_seed=0, test_share=0.5)
    assert train == test == ["only"]


def test_build_counts_and_verify(small_dataset):
    config, manifest, out = small_dataset
    stats = compute_stats(manifest)
    for case, (train_n, test_n) in config.case_counts.items():
        assert stats["cases"][str(case)] == {"train": train_n, "test": test_n}
    assert stats["totals"] == {"train": 18, "test": 9}
    assert manifest.n_entries == 27
    assert verify_dataset(manifest) == 27
    # every referenced file exists
    for entry in manifest.entries:
        assert manifest.resolve(entry.forged_path).is_file()
        assert manifest.resolve(entry.mask_path).is_file()
        assert manifest.original_path(entry.doc_id).is_file()
    assert "total" in format_stats(stats)


def test_manifest_round_trip_is_byte_stable(small_dataset, tmp_path):
    _, manifest, out = small_dataset
    source = out / "manifest.jsonl"
    loaded = read_manifest(source)
    rewritten = tmp_path / "manifest.jsonl"
    write_manifest(loaded, rewritten)
    assert source.read_bytes() == rewritten.read_bytes()
    assert loaded.config_hash == manifest.config_hash


def test_manifest_split_doc_hygiene(small_dataset):
    _, manifest, _ = small_dataset
    train_docs = {e.doc_id for e in manifest.entries if e.split is Split.TRAIN}
    test_docs = {e.doc_id for e in manifest.entries if e.split is Split.TEST}
    assert not (train_docs & test_docs)


def test_rebuild_is_byte_identical(corpus6, small_dataset, tmp_path):
    config, _, out = small_dataset
    build_dataset(config, corpus6, tmp_path / "again")
    assert _trees_identical(out, tmp_path / "again")


def test_jobs_do_not_change_output(corpus6, tmp_path):
    config = BuildConfig(
        case_counts={
            CaseKey(EditPattern.TEXT_REMOVAL, MethodFamily.COPY_MOVE): (3, 1),
            CaseKey(EditPattern.TEXT_REPLACEMENT, MethodFamily.MIX): (2, 1),
        },
        master_seed=5,
    )
    build_dataset(config, corpus6, tmp_path / "serial", jobs=1)
    build_dataset(config, corpus6, tmp_path / "parallel", jobs=4)
    assert _trees_identical(tmp_path / "serial", tmp_path / "parallel")


def test_corpus_order_does_not_change_output(corpus6, tmp_path):
    config = BuildConfig(
        case_counts={CaseKey(EditPattern.TEXT_ADDITION, MethodFamily.GENERATIVE): (3, 2)},
        master_seed=6,
    )
    build_dataset(config, corpus6, tmp_path / "fwd")
    build_dataset(config, list(reversed(corpus6)), tmp_path / "rev")
    assert _trees_identical(tmp_path / "fwd", tmp_path / "rev")


def test_bounding_rect_mask_style(corpus6, tmp_path):
    config = BuildConfig(
        case_counts={CaseKey(EditPattern.TEXT_REMOVAL, MethodFamily.GENERATIVE): (2, 1)},
        master_seed=9,
        mask_style=MaskStyle.BOUNDING_RECT,
    )
    manifest = build_dataset(config, corpus6, tmp_path / "rect")
    assert verify_dataset(manifest) == 3
    for entry in manifest.entries:
        mask = load_mask_png(manifest.resolve(entry.mask_path))
        ys, xs = np.nonzero(mask)
        filled = np.zeros_like(mask)
        filled[ys.min():ys.max() + 1, xs.min():xs.max() + 1] = 1
        assert np.array_equal(mask, filled)


def test_bounding_rect_helper():
    m = np.zeros((6, 7), dtype=np.uint8)
    assert bounding_rect_mask(m).sum() == 0
    m[1, 2] = 1
    m[4, 5] = 1
    rect = bounding_rect_mask(m)
    assert rect.sum() == 4 * 4
    assert rect[1:5, 2:6].all()


def test_empty_corpus_raises():
    config = BuildConfig(
        case_counts={CaseKey(EditPattern.TEXT_REMOVAL, MethodFamily.COPY_MOVE): (1, 0)}
    )
    with pytest.raises(EmptyCorpus):
        build_dataset(config, [], "/tmp/nope")


def test_unwritable_output(corpus6, tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("a file, not a directory")
    config = BuildConfig(
        case_counts={CaseKey(EditPattern.TEXT_REMOVAL, MethodFamily.COPY_MOVE): (1, 0)}
    )
    with pytest.raises(OutputUnwritable):
        build_dataset(config, corpus6, blocker / "sub")


def test_quota_unreachable(tmp_path, rng):
    # single word, no possible replacement donor anywhere
    pixels = np.full((128, 128, 3), 240, dtype=np.uint8)
    pixels[10:20, 10:60] = 30
    img = DocumentImage("solo", pixels)
    annot = OcrAnnotation("solo", 128, 128, (WordBox(Region(10, 10, 50, 10), "ONLY"),))
    config = BuildConfig(
        case_counts={CaseKey(EditPattern.TEXT_REPLACEMENT, MethodFamily.COPY_MOVE): (1, 0)}
    )
    with pytest.raises(QuotaUnreachable):
        build_dataset(config, [(img, annot)], tmp_path / "q")


def test_filter_subset(small_dataset):
    _, manifest, _ = small_dataset
    copy_move_only = filter_subset(
        manifest, lambda c: c.method is MethodFamily.COPY_MOVE, cap=100, seed=0
    )
    assert copy_move_only.n_entries == 12
    assert all(e.case.method is MethodFamily.COPY_MOVE for e in copy_move_only.entries)
    assert {e.split for e in copy_move_only.entries} == {Split.TRAIN, Split.TEST}

    capped = filter_subset(manifest, lambda c: True, cap=10, seed=1)
    assert capped.n_entries == 10
    again = filter_subset(manifest, lambda c: True, cap=10, seed=1)
    assert capped.entries == again.entries
    other = filter_subset(manifest, lambda c: True, cap=10, seed=2)
    assert capped.entries != other.entries

    with pytest.raises(EmptySelectionError):
        filter_subset(manifest, lambda c: False, cap=5, seed=0)
    with pytest.raises(ValueError):
        filter_subset(manifest, lambda c: True, cap=0, seed=0)


def test_compute_stats_empty_manifest():
    manifest = DatasetManifest(
        entries=(), config_hash="0" * 64, tool_version="0",
        mask_style=MaskStyle.CHANGED_PIXELS,
    )
    stats = compute_stats(manifest)
    assert stats == {
        "cases": {}, "totals": {"train": 0, "test": 0}, "n_entries": 0
    }


def test_config_hash_sensitivity():
    case = CaseKey(EditPattern.TEXT_REMOVAL, MethodFamily.COPY_MOVE)
    a = BuildConfig(case_counts={case: (1, 1)}, master_seed=1)
    b = BuildConfig(case_counts={case: (1, 1)}, master_seed=2)
    c = BuildConfig(case_counts={case: (2, 1)}, master_seed=1)
    assert config_hash(a) != config_hash(b)
    assert config_hash(a) != config_hash(c)
    assert config_hash(a) == config_hash(
        BuildConfig(case_counts={case: (1, 1)}, master_seed=1)
    )


def test_read_manifest_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("not json\n")
    with pytest.raises(ManifestError):
        read_manifest(bad)
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    with pytest.raises(ManifestError):
        read_manifest(empty)


def test_verify_detects_tampering(corpus6, tmp_path):
    config = BuildConfig(
        case_counts={CaseKey(EditPattern.TEXT_REMOVAL, MethodFamily.COPY_MOVE): (2, 1)},
        master_seed=1,
    )
    manifest = build_dataset(config, corpus6, tmp_path / "t")
    victim = manifest.resolve(manifest.entries[0].forged_path)
    img = DocumentImage.load(victim)
    arr = img.pixels.copy()
    arr[0, 0] = 255 - arr[0, 0]
    img.with_pixels(arr).save(victim)
    with pytest.raises(VerificationError):
        verify_dataset(manifest)
