"""Self-supervised encoder pre-training on unlabeled document images.

Two stochastic views of each image are pushed through the encoder and
projection head and trained with nt_xent. Any directory of PNGs works
as a corpus; the generated dataset's originals/ folder is the intended
one. Corpora under config.min_images are refused (InsufficientData)
because the contrastive loss degenerates when the same handful of
documents keeps colliding as false negatives.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import torch

from .checkpoints import save_checkpoint
from .configs import PretrainConfig
from .data import list_corpus_images, load_image, pretrain_view
from .errors import InsufficientData
from .losses import nt_xent
from .models import Encoder, ProjectionHead, make_optimizer

_CACHE_CAP = 96  # decoded images kept in memory


@dataclass(frozen=True)
class PretrainResult:
    checkpoint_path: Path
    epoch_losses: tuple[float, ...]
    n_images: int


def pretrain(
    corpus_dir: Path,
    config: PretrainConfig,
    out_path: Path,
    progress: Optional[Callable[[str], None]] = None,
) -> PretrainResult:
    paths = list_corpus_images(corpus_dir)
    if len(paths) < config.min_images:
        raise InsufficientData(
            f"pre-training needs >= {config.min_images} images, found {len(paths)} in {corpus_dir}"
        )
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    encoder = Encoder()
    head = ProjectionHead(config.proj_hidden, config.proj_out)
    params = list(encoder.parameters()) + list(head.parameters())
    opt = make_optimizer(config.optimizer, params, config.lr, config.momentum, config.weight_decay)

    cache: dict[int, torch.Tensor] = {}

    def image(i: int) -> torch.Tensor:
        if i not in cache:
            if len(cache) >= _CACHE_CAP:
                cache.pop(next(iter(cache)))
            cache[i] = load_image(paths[i])
        return cache[i]

    encoder.train()
    head.train()
    epoch_losses = []
    for epoch in range(config.epochs):
        losses = []
        for _ in range(config.steps_per_epoch):
            idx = rng.choice(len(paths), size=config.batch_size, replace=len(paths) < config.batch_size)
            views = [pretrain_view(image(int(i)), config, rng) for i in idx]
            views += [pretrain_view(image(int(i)), config, rng) for i in idx]
            batch = torch.stack(views)
            loss = nt_xent(head(encoder(batch)), config.temperature)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))
        epoch_losses.append(float(np.mean(losses)))
        if progress:
            progress(f"epoch {epoch + 1}/{config.epochs} loss {epoch_losses[-1]:.4f}")

    save_checkpoint(
        Path(out_path),
        kind="encoder",
        state_dict=encoder.state_dict(),
        config=config.to_dict(),
        epoch_losses=epoch_losses,
    )
    return PretrainResult(Path(out_path), tuple(epoch_losses), len(paths))
