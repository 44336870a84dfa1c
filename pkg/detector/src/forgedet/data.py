"""File-based access to generated forgery datasets.

The dataset toolkit publishes a directory tree with a manifest.jsonl at
its root: one JSON header line ({"format": "docforge-manifest",
"version": 1, ...}) followed by one JSON object per sample with at least
case, split, doc_id, index, forged_path and mask_path. Paths are POSIX
and relative to the manifest's directory; masks are single-channel PNGs
with values in {0, 255}. This module speaks only that format, so the
trainer stays decoupled from whichever tool produced the data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path, PurePosixPath
from typing import Optional

import numpy as np
import torch
import torchvision.transforms.functional as TF
from PIL import Image, ImageDraw

from .configs import FinetuneConfig, PretrainConfig
from .errors import ManifestFormatError

MANIFEST_FORMAT = "docforge-manifest"
MANIFEST_VERSION = 1


@dataclass(frozen=True)
class Sample:
    case: str
    split: str
    doc_id: str
    index: int
    forged_path: str
    mask_path: str


@dataclass(frozen=True)
class Dataset:
    root: Path
    samples: tuple[Sample, ...]

    def split(self, name: str) -> tuple[Sample, ...]:
        return tuple(s for s in self.samples if s.split == name)

    def resolve(self, rel: str) -> Path:
        return self.root / PurePosixPath(rel)


def load_dataset(manifest_path: Path) -> Dataset:
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise ManifestFormatError(f"no manifest at {manifest_path}")
    lines = manifest_path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ManifestFormatError("manifest is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise ManifestFormatError(f"manifest header is not JSON: {e}")
    if not isinstance(header, dict) or header.get("format") != MANIFEST_FORMAT:
        raise ManifestFormatError("not a dataset manifest")
    if header.get("version") != MANIFEST_VERSION:
        raise ManifestFormatError(f"unsupported manifest version {header.get('version')!r}")
    samples = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            samples.append(
                Sample(
                    case=str(d["case"]),
                    split=str(d["split"]),
                    doc_id=str(d["doc_id"]),
                    index=int(d["index"]),
                    forged_path=str(d["forged_path"]),
                    mask_path=str(d["mask_path"]),
                )
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
            raise ManifestFormatError(f"bad manifest entry on line {i}: {e}")
    if len(samples) != header.get("n_entries"):
        raise ManifestFormatError(
            f"manifest declares {header.get('n_entries')} entries, found {len(samples)}"
        )
    return Dataset(root=manifest_path.parent, samples=tuple(samples))


def load_image(path: Path) -> torch.Tensor:
    """RGB image as a float32 CxHxW tensor in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1).contiguous()


def load_mask(path: Path) -> torch.Tensor:
    """Ground-truth mask as an int64 HxW tensor in {0, 1}."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    bad = np.setdiff1d(np.unique(arr), [0, 255])
    if bad.size:
        raise ManifestFormatError(f"mask {path} holds values outside {{0, 255}}: {bad[:4]}")
    return torch.from_numpy((arr == 255).astype(np.int64))


def save_mask(labels: np.ndarray, path: Path) -> None:
    """Write a {0, 1} label map as the {0, 255} PNG the scorer expects."""
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray((labels.astype(np.uint8) * 255), mode="L").save(path)


def list_corpus_images(root: Path) -> list[Path]:
    """Every PNG under root, in a platform-independent order."""
    return sorted(Path(root).rglob("*.png"))


def _photometric(img: torch.Tensor, cfg: FinetuneConfig, rng: np.random.Generator) -> torch.Tensor:
    img = TF.adjust_brightness(img, 1.0 + rng.uniform(-cfg.brightness, cfg.brightness))
    img = TF.adjust_contrast(img, 1.0 + rng.uniform(-cfg.contrast, cfg.contrast))
    img = TF.adjust_saturation(img, 1.0 + rng.uniform(-cfg.saturation, cfg.saturation))
    img = TF.adjust_hue(img, rng.uniform(-cfg.hue, cfg.hue))
    return img


def _resize_pair(
    img: torch.Tensor, mask: torch.Tensor, side: Optional[int]
) -> tuple[torch.Tensor, torch.Tensor]:
    if side is None:
        return img, mask
    h, w = img.shape[-2:]
    if min(h, w) == side:
        return img, mask
    scale = side / min(h, w)
    size = [max(side, round(h * scale)), max(side, round(w * scale))]
    img = TF.resize(img, size, antialias=True)
    mask = TF.resize(mask.unsqueeze(0).float(), size, interpolation=TF.InterpolationMode.NEAREST)
    return img, mask.squeeze(0).long()


def finetune_crop(
    img: torch.Tensor,
    mask: torch.Tensor,
    cfg: FinetuneConfig,
    rng: np.random.Generator,
) -> tuple[torch.Tensor, torch.Tensor]:
    """One augmented training crop and its label map.

    Forged pixels cover well under 1% of a document, so a uniform
    cropper would feed the loss almost pure background; with probability
    biased_crop_prob the crop is centered (with jitter) on a random
    ground-truth forged pixel instead.
    """
    img, mask = _resize_pair(img, mask, cfg.resize_side)
    side = cfg.crop_side
    h, w = img.shape[-2:]
    if h < side or w < side:
        pad_h, pad_w = max(0, side - h), max(0, side - w)
        img = torch.nn.functional.pad(img, (0, pad_w, 0, pad_h), value=1.0)
        mask = torch.nn.functional.pad(mask, (0, pad_w, 0, pad_h), value=0)
        h, w = img.shape[-2:]
    ys, xs = torch.nonzero(mask, as_tuple=True)
    if len(ys) > 0 and rng.random() < cfg.biased_crop_prob:
        k = int(rng.integers(len(ys)))
        jitter = side // 4
        cy = int(ys[k]) + int(rng.integers(-jitter, jitter + 1))
        cx = int(xs[k]) + int(rng.integers(-jitter, jitter + 1))
        top = min(max(cy - side // 2, 0), h - side)
        left = min(max(cx - side // 2, 0), w - side)
    else:
        top = int(rng.integers(0, h - side + 1))
        left = int(rng.integers(0, w - side + 1))
    img = img[:, top : top + side, left : left + side]
    mask = mask[top : top + side, left : left + side]
    if rng.random() < cfg.flip_prob:
        img = TF.hflip(img)
        mask = TF.hflip(mask.unsqueeze(0)).squeeze(0)
    if rng.random() < cfg.jitter_prob:
        img = _photometric(img, cfg, rng)
    return img, mask


_STAMP_CHARS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"


def _stamp_text(view: torch.Tensor, rng: np.random.Generator) -> torch.Tensor:
    """Draw 1-2 short random strings in a random dark gray onto the view."""
    pil = Image.fromarray(
        (view.clamp(0, 1) * 255).round().to(torch.uint8).permute(1, 2, 0).numpy()
    )
    draw = ImageDraw.Draw(pil)
    w, h = pil.size
    for _ in range(int(rng.integers(1, 3))):
        text = "".join(rng.choice(list(_STAMP_CHARS), size=int(rng.integers(3, 9))))
        xy = (int(rng.integers(0, max(1, w - 8))), int(rng.integers(0, max(1, h - 12))))
        shade = int(rng.integers(0, 96))
        draw.text(xy, text, fill=(shade, shade, shade))
    return torch.from_numpy(np.array(pil)).permute(2, 0, 1).float() / 255.0


def pretrain_view(img: torch.Tensor, cfg: PretrainConfig, rng: np.random.Generator) -> torch.Tensor:
    """One stochastic view for the two-view contrastive objective."""
    _, h, w = img.shape
    area = h * w
    for _ in range(10):
        target = area * rng.uniform(cfg.crop_scale_min, 1.0)
        aspect = np.exp(rng.uniform(np.log(3 / 4), np.log(4 / 3)))
        cw = round(np.sqrt(target * aspect))
        ch = round(np.sqrt(target / aspect))
        if 0 < cw <= w and 0 < ch <= h:
            top = int(rng.integers(0, h - ch + 1))
            left = int(rng.integers(0, w - cw + 1))
            break
    else:
        ch, cw, top, left = min(h, w), min(h, w), 0, 0
    view = TF.resized_crop(img, top, left, ch, cw, [cfg.crop_side, cfg.crop_side], antialias=True)
    if rng.random() < cfg.flip_prob:
        view = TF.hflip(view)
    if rng.random() < cfg.jitter_prob:
        view = TF.adjust_brightness(view, 1.0 + rng.uniform(-0.4, 0.4))
        view = TF.adjust_contrast(view, 1.0 + rng.uniform(-0.4, 0.4))
        view = TF.adjust_saturation(view, 1.0 + rng.uniform(-0.4, 0.4))
        view = TF.adjust_hue(view, rng.uniform(-0.1, 0.1))
    if rng.random() < cfg.grayscale_prob:
        view = TF.rgb_to_grayscale(view, num_output_channels=3)
    if rng.random() < cfg.blur_prob:
        view = TF.gaussian_blur(view, kernel_size=5, sigma=float(rng.uniform(0.1, 2.0)))
    if cfg.text_overlay_prob and rng.random() < cfg.text_overlay_prob:
        view = _stamp_text(view, rng)
    return view.clamp(0.0, 1.0)
