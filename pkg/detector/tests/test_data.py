"""Manifest parsing, mask IO, and augmentation behavior."""

from __future__ import annotations

import json
from dataclasses import replace

import numpy as np
import pytest
import torch
from PIL import Image

from forgedet.configs import FinetuneConfig, PretrainConfig
from forgedet.data import (
    Dataset,
    finetune_crop,
    list_corpus_images,
    load_dataset,
    load_image,
    load_mask,
    pretrain_view,
    save_mask,
)
from forgedet.errors import ManifestFormatError

from conftest import CASES, rewrite_manifest


class TestManifest:
    def test_parses_generated_dataset(self, manifest_path):
        ds = load_dataset(manifest_path)
        assert len(ds.samples) == 27 + 18
        assert {s.case for s in ds.samples} == set(CASES)
        assert len(ds.split("train")) == 27
        assert len(ds.split("test")) == 18
        for s in ds.samples[:6]:
            assert ds.resolve(s.forged_path).is_file()
            assert ds.resolve(s.mask_path).is_file()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ManifestFormatError):
            load_dataset(tmp_path / "nope.jsonl")

    def test_rejects_foreign_header(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text('{"format": "something-else", "version": 1}\n')
        with pytest.raises(ManifestFormatError):
            load_dataset(p)
        p.write_text("not json at all\n")
        with pytest.raises(ManifestFormatError):
            load_dataset(p)

    def test_rejects_wrong_version(self, manifest_path, tmp_path):
        lines = manifest_path.read_text().splitlines()
        header = json.loads(lines[0])
        header["version"] = 99
        p = tmp_path / "m.jsonl"
        p.write_text("\n".join([json.dumps(header)] + lines[1:]) + "\n")
        with pytest.raises(ManifestFormatError):
            load_dataset(p)

    def test_rejects_entry_count_mismatch(self, manifest_path, tmp_path):
        lines = manifest_path.read_text().splitlines()
        p = tmp_path / "m.jsonl"
        p.write_text("\n".join(lines[:-1]) + "\n")  # drop one entry
        with pytest.raises(ManifestFormatError):
            load_dataset(p)

    def test_rejects_malformed_entry(self, manifest_path, tmp_path):
        lines = manifest_path.read_text().splitlines()
        lines[1] = '{"case": "text_removal/copy_move"}'  # missing keys
        p = tmp_path / "m.jsonl"
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(ManifestFormatError):
            load_dataset(p)

    def test_subset_rewrite_roundtrip(self, manifest_path, tmp_path):
        sub = rewrite_manifest(
            manifest_path, tmp_path / "sub.jsonl", lambda d: d["split"] == "test"
        )
        ds = load_dataset(sub)
        assert len(ds.samples) == 18
        assert not ds.split("train")


class TestMaskIO:
    def test_roundtrip(self, tmp_path, rng):
        labels = (rng.random((20, 30)) < 0.3).astype(np.int64)
        save_mask(labels, tmp_path / "m.png")
        back = load_mask(tmp_path / "m.png")
        assert back.dtype == torch.int64
        assert np.array_equal(back.numpy(), labels)
        raw = np.asarray(Image.open(tmp_path / "m.png"))
        assert set(np.unique(raw)) <= {0, 255}

    def test_rejects_gray_values(self, tmp_path):
        Image.fromarray(np.full((8, 8), 128, dtype=np.uint8), mode="L").save(tmp_path / "g.png")
        with pytest.raises(ManifestFormatError):
            load_mask(tmp_path / "g.png")

    def test_image_loads_as_unit_float(self, dataset_dir):
        ds = load_dataset(dataset_dir / "manifest.jsonl")
        img = load_image(ds.resolve(ds.samples[0].forged_path))
        assert img.dtype == torch.float32
        assert img.shape[0] == 3
        assert 0.0 <= float(img.min()) and float(img.max()) <= 1.0

    def test_list_corpus_images(self, corpus_pngs):
        paths = list_corpus_images(corpus_pngs)
        assert len(paths) == 10
        assert paths == sorted(paths)


def _checker(side=160):
    img = torch.zeros(3, side, side)
    img[:, : side // 2] = 1.0
    mask = torch.zeros(side, side, dtype=torch.int64)
    mask[10:20, 30:44] = 1
    return img, mask


class TestFinetuneCrop:
    def test_shapes_and_label_values(self, rng):
        img, mask = _checker()
        cfg = FinetuneConfig(crop_side=64)
        for _ in range(5):
            c, m = finetune_crop(img, mask, cfg, rng)
            assert c.shape == (3, 64, 64)
            assert m.shape == (64, 64)
            assert set(np.unique(m.numpy())) <= {0, 1}

    def test_biased_crop_contains_forged(self, rng):
        img, mask = _checker()
        cfg = FinetuneConfig(crop_side=64, biased_crop_prob=1.0, flip_prob=0.0, jitter_prob=0.0)
        for _ in range(20):
            _, m = finetune_crop(img, mask, cfg, rng)
            assert int(m.sum()) > 0

    def test_flip_moves_image_and_mask_together(self, rng):
        img, mask = _checker()
        cfg = FinetuneConfig(
            crop_side=160, biased_crop_prob=0.0, flip_prob=1.0, jitter_prob=0.0
        )
        c, m = finetune_crop(img, mask, cfg, rng)
        assert torch.equal(m, torch.flip(mask, dims=[1]))
        assert torch.equal(c, torch.flip(img, dims=[2]))

    def test_small_image_padded(self, rng):
        img = torch.rand(3, 40, 50)
        mask = torch.zeros(40, 50, dtype=torch.int64)
        cfg = FinetuneConfig(crop_side=64, jitter_prob=0.0)
        c, m = finetune_crop(img, mask, cfg, rng)
        assert c.shape == (3, 64, 64)
        assert m.shape == (64, 64)

    def test_resize_scales_both(self, rng):
        img, mask = _checker(160)
        cfg = FinetuneConfig(
            resize_side=80, crop_side=80, biased_crop_prob=0.0, flip_prob=0.0, jitter_prob=0.0
        )
        c, m = finetune_crop(img, mask, cfg, rng)
        assert c.shape == (3, 80, 80)
        # the 10x14 forged rect lands at half scale, so roughly 5x7
        assert 20 <= int(m.sum()) <= 50

    def test_photometric_stays_in_range(self, rng):
        img, mask = _checker()
        cfg = FinetuneConfig(crop_side=64, jitter_prob=1.0)
        c, _ = finetune_crop(img, mask, cfg, rng)
        assert -1e-6 <= float(c.min()) and float(c.max()) <= 1.0 + 1e-6


class TestPretrainView:
    def test_shape_and_range(self, rng):
        img = torch.rand(3, 100, 140)
        cfg = PretrainConfig(crop_side=48)
        for _ in range(8):
            v = pretrain_view(img, cfg, rng)
            assert v.shape == (3, 48, 48)
            assert 0.0 <= float(v.min()) and float(v.max()) <= 1.0

    def test_deterministic_under_seeded_rng(self):
        img = torch.rand(3, 96, 96)
        cfg = PretrainConfig(crop_side=32)
        a = pretrain_view(img, cfg, np.random.default_rng(7))
        b = pretrain_view(img, cfg, np.random.default_rng(7))
        assert torch.equal(a, b)

    def test_views_differ_across_draws(self, rng):
        img = torch.rand(3, 96, 96)
        cfg = PretrainConfig(crop_side=32)
        a = pretrain_view(img, cfg, rng)
        b = pretrain_view(img, cfg, rng)
        assert not torch.equal(a, b)

    def test_text_overlay_darkens_pixels_when_enabled(self):
        img = torch.ones(3, 96, 96)
        base = PretrainConfig(
            crop_side=64, flip_prob=0, jitter_prob=0, grayscale_prob=0,
            blur_prob=0, crop_scale_min=1.0,
        )
        plain = pretrain_view(img, base, np.random.default_rng(3))
        stamped = pretrain_view(
            img, replace(base, text_overlay_prob=1.0), np.random.default_rng(3)
        )
        assert torch.equal(plain, torch.ones_like(plain))
        dark = (stamped < 0.5).float().mean().item()
        assert 0.0 < dark < 0.2
