"""Command line front end: pretrain, finetune, predict, info."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .checkpoints import load_checkpoint
from .configs import FinetuneConfig, PretrainConfig
from .errors import DetectorError
from .finetune import finetune
from .predict import predict
from .pretrain import pretrain


def _override(config, args, names):
    updates = {n: getattr(args, n) for n in names if getattr(args, n) is not None}
    return dataclasses.replace(config, **updates) if updates else config


def _add_pretrain(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("pretrain", help="contrastive pre-training on a directory of PNGs")
    p.add_argument("--corpus", type=Path, required=True, help="directory scanned recursively for *.png")
    p.add_argument("--out", type=Path, required=True, help="encoder checkpoint to write")
    p.add_argument("--epochs", type=int)
    p.add_argument("--steps-per-epoch", dest="steps_per_epoch", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--optimizer", choices=["sgd", "lars"])
    p.add_argument("--temperature", type=float)
    p.add_argument("--min-images", dest="min_images", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--paper-preset", action="store_true", help="start from the full-scale recipe")


def _add_finetune(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("finetune", help="supervised fine-tuning on a dataset's train split")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="segmentation checkpoint to write")
    p.add_argument("--encoder", type=Path, help="optional pre-trained encoder checkpoint")
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--crop-side", dest="crop_side", type=int)
    p.add_argument("--forged-weight", dest="forged_weight", type=float)
    p.add_argument("--dice-weight", dest="dice_weight", type=float)
    p.add_argument("--freeze-encoder", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--paper-preset", action="store_true", help="start from the full-scale recipe")


def _add_predict(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("predict", help="write prediction masks for one split")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="prediction directory (mirrored layout)")
    p.add_argument("--split", default="test", choices=["train", "test"])


def _add_info(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("info", help="describe a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--kind", default="segmentation", choices=["encoder", "segmentation"])


def _run_pretrain(args: argparse.Namespace) -> int:
    base = PretrainConfig.paper_preset() if args.paper_preset else PretrainConfig()
    config = _override(
        base,
        args,
        ["epochs", "steps_per_epoch", "batch_size", "lr", "optimizer", "temperature", "min_images", "seed"],
    )
    result = pretrain(args.corpus, config, args.out, progress=lambda m: print(m, flush=True))
    print(f"pretrained on {result.n_images} images -> {result.checkpoint_path}")
    print(f"epoch losses: {' '.join(f'{v:.4f}' for v in result.epoch_losses)}")
    return 0


def _run_finetune(args: argparse.Namespace) -> int:
    base = FinetuneConfig.paper_preset() if args.paper_preset else FinetuneConfig()
    config = _override(
        base, args, ["iterations", "batch_size", "lr", "crop_side", "forged_weight", "dice_weight", "seed"]
    )
    if args.freeze_encoder:
        config = dataclasses.replace(config, freeze_encoder=True)
    result = finetune(
        args.manifest, config, args.out, encoder_checkpoint=args.encoder,
        progress=lambda m: print(m, flush=True),
    )
    tail = result.iteration_losses[-min(50, len(result.iteration_losses)):]
    print(f"finetuned on {result.n_train} images -> {result.checkpoint_path}")
    print(f"final loss (mean of last {len(tail)} iters): {sum(tail) / len(tail):.4f}")
    return 0


def _run_predict(args: argparse.Namespace) -> int:
    result = predict(
        args.checkpoint, args.manifest, args.out, split=args.split,
        progress=lambda m: print(m, flush=True),
    )
    print(f"wrote {len(result.written)} masks under {result.out_dir}")
    return 0


def _run_info(args: argparse.Namespace) -> int:
    payload = load_checkpoint(args.checkpoint, expected_kind=args.kind)
    print(f"kind: {payload['kind']}")
    for key, value in sorted(payload["config"].items()):
        print(f"  {key}: {value}")
    losses = payload.get("epoch_losses") or payload.get("iteration_losses")
    if losses:
        print(f"  recorded losses: {len(losses)} (last {losses[-1]:.4f})")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="forgedet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_pretrain(sub)
    _add_finetune(sub)
    _add_predict(sub)
    _add_info(sub)
    args = parser.parse_args(argv)
    handlers = {
        "pretrain": _run_pretrain,
        "finetune": _run_finetune,
        "predict": _run_predict,
        "info": _run_info,
    }
    try:
        return handlers[args.command](args)
    except (DetectorError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
