"""Supervised fine-tuning of the segmentation model on a generated
dataset's train split. Starts from a pre-trained encoder checkpoint
when one is given, otherwise from random init.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import torch

from .checkpoints import load_checkpoint, save_checkpoint
from .configs import FinetuneConfig
from .data import Dataset, finetune_crop, load_dataset, load_image, load_mask
from .errors import EmptyTrainSplit
from .losses import segmentation_loss
from .models import Encoder, SegmentationModel


@dataclass(frozen=True)
class FinetuneResult:
    checkpoint_path: Path
    iteration_losses: tuple[float, ...]
    n_train: int


class _TrainStore:
    """Train images and masks, decoded once and held as uint8/bool."""

    def __init__(self, dataset: Dataset, samples) -> None:
        self.images = []
        self.masks = []
        for s in samples:
            img = load_image(dataset.resolve(s.forged_path))
            self.images.append((img * 255.0).round().to(torch.uint8))
            self.masks.append(load_mask(dataset.resolve(s.mask_path)).to(torch.bool))

    def __len__(self) -> int:
        return len(self.images)

    def pair(self, i: int) -> tuple[torch.Tensor, torch.Tensor]:
        return self.images[i].float() / 255.0, self.masks[i].long()


def finetune(
    manifest_path: Path,
    config: FinetuneConfig,
    out_path: Path,
    encoder_checkpoint: Optional[Path] = None,
    progress: Optional[Callable[[str], None]] = None,
) -> FinetuneResult:
    dataset = load_dataset(Path(manifest_path))
    train = dataset.split("train")
    if not train:
        raise EmptyTrainSplit(f"manifest {manifest_path} has no train entries")

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    encoder = Encoder()
    if encoder_checkpoint is not None:
        payload = load_checkpoint(Path(encoder_checkpoint), expected_kind="encoder")
        encoder.load_state_dict(payload["state_dict"])
    model = SegmentationModel(encoder)
    if config.freeze_encoder:
        for p in model.encoder.parameters():
            p.requires_grad_(False)
    trainable = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.SGD(
        trainable, lr=config.lr, momentum=config.momentum, weight_decay=config.weight_decay
    )

    store = _TrainStore(dataset, train)
    model.train()
    if config.freeze_encoder:
        # A frozen encoder must also stop accumulating BatchNorm running
        # statistics, or "frozen" weights would still drift in effect.
        model.encoder.eval()
    losses = []
    for it in range(config.iterations):
        frac = 1.0
        if config.cosine_lr:
            frac = 0.05 + 0.95 * 0.5 * (1.0 + np.cos(np.pi * it / config.iterations))
        if config.warmup_iters > 0:
            frac = min(frac, (it + 1) / config.warmup_iters)
        for group in opt.param_groups:
            group["lr"] = config.lr * frac
        idx = rng.choice(len(store), size=config.batch_size, replace=len(store) < config.batch_size)
        crops, labels = [], []
        for i in idx:
            img, mask = store.pair(int(i))
            c, m = finetune_crop(img, mask, config, rng)
            crops.append(c)
            labels.append(m)
        logits = model(torch.stack(crops))
        loss = segmentation_loss(
            logits,
            torch.stack(labels),
            config.forged_weight,
            config.hard_negative_ratio,
            config.dice_weight,
        )
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(float(loss.detach()))
        if progress and (it + 1) % 50 == 0:
            recent = float(np.mean(losses[-50:]))
            progress(f"iter {it + 1}/{config.iterations} loss {recent:.4f}")

    save_checkpoint(
        Path(out_path),
        kind="segmentation",
        state_dict=model.state_dict(),
        config=config.to_dict(),
        encoder_checkpoint=str(encoder_checkpoint) if encoder_checkpoint else None,
        iteration_losses=losses,
    )
    return FinetuneResult(Path(out_path), tuple(losses), len(train))
