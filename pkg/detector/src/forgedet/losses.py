"""Training objectives.

nt_xent is the normalized-temperature cross entropy over 2N views: rows
i and i+N are the two views of image i, every other row in the batch is
a negative. Cosine similarity, so the loss is invariant under any
orthogonal transform applied to all embeddings at once.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F


def nt_xent(embeddings: torch.Tensor, temperature: float) -> torch.Tensor:
    """Contrastive loss for a 2N x D batch of paired embeddings."""
    if embeddings.dim() != 2 or embeddings.shape[0] < 4 or embeddings.shape[0] % 2 != 0:
        raise ValueError("embeddings must be 2NxD with N >= 2")
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    two_n = embeddings.shape[0]
    n = two_n // 2
    z = F.normalize(embeddings, dim=1)
    sim = z @ z.t() / temperature
    sim.fill_diagonal_(float("-inf"))  # a view is never its own negative
    targets = torch.arange(two_n, device=embeddings.device)
    targets = (targets + n) % two_n  # row i pairs with row i +/- N
    return F.cross_entropy(sim, targets)


def segmentation_loss(
    logits: torch.Tensor,
    labels: torch.Tensor,
    forged_weight: float = 1.0,
    hard_negative_ratio: float | None = None,
    dice_weight: float = 0.5,
) -> torch.Tensor:
    """Per-pixel cross entropy plus a soft-Dice term on the forged class.

    forged_weight rebalances the rare class inside the cross entropy.
    The Dice term (dice_weight * (1 - soft Dice overlap), computed over
    the whole batch) exists because weighted cross entropy alone has a
    stable "predict authentic everywhere" basin when foreground covers a
    few percent of pixels: the model hedges on forged pixels but never
    crosses argmax, and the per-pixel gradient is too dilute to push it
    out. Dice's gradient scales with the inverse of the predicted region
    size, so it is strongest exactly in that basin and fades once
    predictions overlap the truth. dice_weight=0 restores plain
    (weighted) cross entropy.

    With hard_negative_ratio set, authentic pixels are mined online:
    every forged pixel contributes, but only the ratio * #forged hardest
    authentic pixels do (never fewer than 1% of the batch), so the
    authentic side of the loss concentrates on the lookalikes that
    actually cause false positives. The cross-entropy part stays a
    weighted mean of per-pixel cross entropies.
    """
    if dice_weight < 0:
        raise ValueError("dice_weight must be >= 0")
    dice = 0.0
    if dice_weight > 0:
        p_forged = F.softmax(logits, dim=1)[:, 1]
        y = (labels == 1).to(logits.dtype)
        overlap = (2.0 * (p_forged * y).sum() + 1.0) / (p_forged.sum() + y.sum() + 1.0)
        dice = dice_weight * (1.0 - overlap)
    ce = F.cross_entropy(logits, labels, reduction="none")
    if hard_negative_ratio is None:
        weight = torch.tensor([1.0, forged_weight], dtype=logits.dtype, device=logits.device)
        return F.cross_entropy(logits, labels, weight=weight) + dice
    if hard_negative_ratio <= 0:
        raise ValueError("hard_negative_ratio must be > 0 when set")
    fg = labels == 1
    n_fg = int(fg.sum())
    floor = max(1, ce.numel() // 100)
    k = min(int(ce.numel() - n_fg), max(floor, round(hard_negative_ratio * n_fg)))
    neg_ce = ce[~fg]
    hard = torch.topk(neg_ce, k).values
    total = forged_weight * ce[fg].sum() + hard.sum()
    return total / (forged_weight * n_fg + k) + dice
