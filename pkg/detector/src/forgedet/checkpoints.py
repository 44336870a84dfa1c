"""Checkpoint serialization. A checkpoint is a torch.save dict with a
format tag, a kind ("encoder" or "segmentation"), the state_dict, and
the config it was trained with, so predict can rebuild the exact model.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

import torch

from .errors import MissingCheckpoint

CHECKPOINT_FORMAT = "forgedet-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(path: Path, kind: str, state_dict: dict, config: dict, **extra: Any) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "state_dict": state_dict,
        "config": config,
    }
    payload.update(extra)
    torch.save(payload, path)


def load_checkpoint(path: Path, expected_kind: str) -> dict:
    path = Path(path)
    if not path.is_file():
        raise MissingCheckpoint(f"no checkpoint at {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as e:  # torch raises a zoo of unpickling errors
        raise MissingCheckpoint(f"unreadable checkpoint {path}: {e}")
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise MissingCheckpoint(f"{path} is not a detector checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise MissingCheckpoint(f"unsupported checkpoint version {payload.get('version')!r}")
    if payload.get("kind") != expected_kind:
        raise MissingCheckpoint(
            f"{path} holds a {payload.get('kind')!r} checkpoint, expected {expected_kind!r}"
        )
    return payload
