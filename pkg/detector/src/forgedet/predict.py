"""Inference: write one {0, 255} prediction mask per manifest entry,
mirroring each entry's relative path under the output directory, which
is the layout the dataset toolkit's scorer resolves first. Masks always
match the input image's dimensions; when the checkpoint was trained
with a resize, inference runs at that scale and the label map is
upsampled back.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import torch

from .checkpoints import load_checkpoint
from .configs import FinetuneConfig
from .data import load_dataset, load_image, save_mask, _resize_pair
from .models import SegmentationModel


@dataclass(frozen=True)
class PredictResult:
    out_dir: Path
    written: tuple[str, ...]  # relative POSIX paths


def load_segmentation_model(checkpoint_path: Path) -> tuple[SegmentationModel, FinetuneConfig]:
    payload = load_checkpoint(Path(checkpoint_path), expected_kind="segmentation")
    config = FinetuneConfig(**payload["config"])
    model = SegmentationModel()
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, config


@torch.no_grad()
def predict_image(model: SegmentationModel, config: FinetuneConfig, img: torch.Tensor) -> np.ndarray:
    """{0, 1} int64 label map with the same height and width as img."""
    h, w = img.shape[-2:]
    scaled, _ = _resize_pair(img, torch.zeros((h, w), dtype=torch.int64), config.resize_side)
    logits = model(scaled.unsqueeze(0))
    if logits.shape[-2:] != (h, w):
        logits = torch.nn.functional.interpolate(
            logits, size=(h, w), mode="bilinear", align_corners=False
        )
    return logits.argmax(dim=1).squeeze(0).numpy()


def predict(
    checkpoint_path: Path,
    manifest_path: Path,
    out_dir: Path,
    split: str = "test",
    progress: Optional[Callable[[str], None]] = None,
) -> PredictResult:
    model, config = load_segmentation_model(checkpoint_path)
    dataset = load_dataset(Path(manifest_path))
    samples = dataset.split(split)
    out_dir = Path(out_dir)
    written = []
    for k, s in enumerate(samples):
        img = load_image(dataset.resolve(s.forged_path))
        labels = predict_image(model, config, img)
        save_mask(labels, out_dir / Path(s.forged_path))
        written.append(s.forged_path)
        if progress and (k + 1) % 20 == 0:
            progress(f"predicted {k + 1}/{len(samples)}")
    return PredictResult(out_dir, tuple(written))
