"""Networks: a small stride-8 convolutional encoder, the projection head
used only during pre-training, and a per-pixel two-class segmentation
head. All conv blocks use BatchNorm: training runs on small crops while
prediction runs on whole pages, and eval-mode BatchNorm applies fixed
running statistics, so the normalization a pixel sees does not depend
on input size or content mix (a spatially-computed norm such as
GroupNorm shifts between the two regimes — measured as a whole-page vs
tiled-inference IoU gap of 0.3+ on memorization probes). A full-scale
run would swap the trunk for a standard ResNet-50, but at test scale
the trunk below trains in minutes and exercises the identical
objective.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

ENCODER_STRIDE = 8
ENCODER_DIM = 88


def _block(cin: int, cout: int, stride: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, kernel_size=3, stride=stride, padding=1, bias=False),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
    )


INPUT_CHANNELS = 6


def input_residual(x: torch.Tensor) -> torch.Tensor:
    """Append fixed noise-residual channels to an RGB batch.

    Local edits leave their clearest physical trace in the noise
    texture (filled regions lose sensor grain, pasted ones carry a
    seam, freshly synthesized ink has no grain riding on it), but that
    trace is on the order of 1% contrast and only separates from clean
    paper after local aggregation. Three fixed channels hand it to the
    network directly: a high-pass luminance residual and its local RMS
    amplitude at two window sizes. The amplitudes are computed on a
    clamped copy of the residual: content edges respond ~50x stronger
    than grain and would otherwise drown it inside any window touching
    a stroke boundary, while the clamp (a few grain sigmas) saturates
    edges and passes grain through.
    """
    gray = 0.299 * x[:, 0:1] + 0.587 * x[:, 1:2] + 0.114 * x[:, 2:3]
    blur = F.avg_pool2d(gray, kernel_size=3, stride=1, padding=1, count_include_pad=False)
    hp = (gray - blur) * 8.0
    sq = hp.clamp(-0.15, 0.15).square()
    amp5 = torch.sqrt(F.avg_pool2d(sq, 5, stride=1, padding=2, count_include_pad=False) + 1e-8)
    amp11 = torch.sqrt(F.avg_pool2d(sq, 11, stride=1, padding=5, count_include_pad=False) + 1e-8)
    return torch.cat([x, hp, amp5, amp11], dim=1)


class Encoder(nn.Module):
    """RGB + noise-residual channels -> ENCODER_DIM feature map at 1/8 resolution."""

    STAGE_DIMS = (40, 64, ENCODER_DIM)  # at strides 2, 4, 8

    def __init__(self) -> None:
        super().__init__()
        d1, d2, d3 = self.STAGE_DIMS
        self.stem = _block(INPUT_CHANNELS, 16, 1)
        self.stage1 = nn.Sequential(_block(16, d1, 2), _block(d1, d1, 1))
        self.stage2 = nn.Sequential(_block(d1, d2, 2), _block(d2, d2, 1))
        self.stage3 = nn.Sequential(_block(d2, d3, 2), _block(d3, d3, 1))

    def stages(
        self, x: torch.Tensor, features: torch.Tensor | None = None
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        if features is None:
            features = input_residual(x)
        s1 = self.stage1(self.stem(features))
        s2 = self.stage2(s1)
        s3 = self.stage3(s2)
        return s1, s2, s3

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.stages(x)[2]


class ProjectionHead(nn.Module):
    """Pooled features -> L2-normalizable embedding for the contrastive loss."""

    def __init__(self, hidden: int, out: int) -> None:
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(ENCODER_DIM, hidden),
            nn.ReLU(inplace=True),
            nn.Linear(hidden, out),
        )

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        pooled = feats.mean(dim=(2, 3))
        return self.net(pooled)


class SegmentationModel(nn.Module):
    """Encoder plus a skip-connected decoder emitting {authentic,
    forged} logits at input resolution. The stride-8 map alone blurs
    word-sized regions away, so stride-4 and stride-2 laterals are fused
    back in before classification (the classic fully-convolutional
    upsample-and-add arrangement).
    """

    FUSE_DIM = 32
    REFINE_DIM = 16

    def __init__(self, encoder: Encoder | None = None) -> None:
        super().__init__()
        self.encoder = encoder if encoder is not None else Encoder()
        d1, d2, d3 = Encoder.STAGE_DIMS
        f = self.FUSE_DIM
        r = self.REFINE_DIM
        self.top = nn.Conv2d(d3, f, kernel_size=1)
        self.lat2 = nn.Conv2d(d2, f, kernel_size=1)
        self.lat1 = nn.Conv2d(d1, f, kernel_size=1)
        self.fuse = _block(f, f, 1)
        # Ground-truth masks are pixel-exact (glyph strokes, sharp patch
        # edges), so a light full-resolution stage reads the raw
        # residual channels and sharpens the stride-2 decision. Kept
        # narrow (it runs on every input pixel), but normalized: without
        # a norm this stage can die early under an unlucky seed and the
        # detector never recovers fine detail.
        self.project = nn.Conv2d(f, r, kernel_size=1)
        self.refine = _block(INPUT_CHANNELS + r, r, 1)
        self.classifier = nn.Conv2d(r, 2, kernel_size=1)
        # Zero logits at init: an untrained model emits the authentic
        # class everywhere rather than random stripes, and the first
        # optimizer steps stay well conditioned.
        nn.init.zeros_(self.classifier.weight)
        nn.init.zeros_(self.classifier.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        features = input_residual(x)
        s1, s2, s3 = self.encoder.stages(x, features)
        y = self.top(s3)
        y = F.interpolate(y, size=s2.shape[-2:], mode="bilinear", align_corners=False) + self.lat2(s2)
        y = F.interpolate(y, size=s1.shape[-2:], mode="bilinear", align_corners=False) + self.lat1(s1)
        y = self.project(self.fuse(y))
        y = F.interpolate(y, size=x.shape[-2:], mode="bilinear", align_corners=False)
        y = self.refine(torch.cat([features, y], dim=1))
        return self.classifier(y)


class LARS(torch.optim.Optimizer):
    """Layer-wise adaptive rate scaling on top of SGD with momentum.

    Each parameter's learning rate is scaled by the trust ratio
    ||w|| / ||g + wd * w||; parameters with zero weight or zero gradient
    norm fall back to the plain rate. Matches the recipe used for
    large-batch contrastive pre-training.
    """

    def __init__(self, params, lr: float, momentum: float = 0.9, weight_decay: float = 0.0):
        if lr <= 0:
            raise ValueError("lr must be > 0")
        defaults = dict(lr=lr, momentum=momentum, weight_decay=weight_decay)
        super().__init__(params, defaults)

    @torch.no_grad()
    def step(self, closure=None):
        loss = None
        if closure is not None:
            with torch.enable_grad():
                loss = closure()
        for group in self.param_groups:
            lr = group["lr"]
            momentum = group["momentum"]
            wd = group["weight_decay"]
            for p in group["params"]:
                if p.grad is None:
                    continue
                g = p.grad
                if wd != 0:
                    g = g.add(p, alpha=wd)
                w_norm = torch.norm(p)
                g_norm = torch.norm(g)
                if w_norm > 0 and g_norm > 0:
                    trust = w_norm / g_norm
                else:
                    trust = torch.ones_like(w_norm)
                state = self.state[p]
                buf = state.get("momentum_buffer")
                if buf is None:
                    buf = torch.zeros_like(p)
                    state["momentum_buffer"] = buf
                buf.mul_(momentum).add_(g, alpha=float(lr * trust))
                p.add_(buf, alpha=-1.0)
        return loss


def make_optimizer(name: str, params, lr: float, momentum: float, weight_decay: float):
    if name == "sgd":
        return torch.optim.SGD(params, lr=lr, momentum=momentum, weight_decay=weight_decay)
    if name == "lars":
        return LARS(params, lr=lr, momentum=momentum, weight_decay=weight_decay)
    raise ValueError(f"unknown optimizer {name!r}")
