"""Bridge to external image generators over a file-based protocol.

Heavyweight inpainting or text-style-transfer models live in their own
processes. The bridge writes the inputs (image, mask, request descriptor)
to disk, invokes the tool, validates its response, and enforces the one
rule the dataset depends on: the tool may repaint inside the mask but must
leave the rest of the image alone (small codec wobble tolerated). Accepted
output is composited back using only in-mask pixels, so the ground-truth
mask stays exact no matter what the tool wrote elsewhere.
"""

from __future__ import annotations

import json
import subprocess
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .corpus import DocumentImage
from .editops import BinaryMaskRegion, changed_pixels
from .errors import (
    GeneratorTimeout,
    OutsideMaskModified,
    ProcessFailure,
    ProtocolViolation,
)

# Per-channel slack allowed outside the mask before a response is rejected.
OUTSIDE_MASK_TOLERANCE = 2
MIN_TIMEOUT_S = 1.0
MAX_TIMEOUT_S = 600.0

REQUEST_KINDS = ("inpaint", "text_style_transfer")


@dataclass(frozen=True)
class BridgeConfig:
    """How to launch the external tool.

    command is an argv prefix; the request descriptor path is appended as
    the final argument.
    """

    command: tuple[str, ...]
    timeout_s: float = 60.0

    def __post_init__(self):
        if not self.command:
            raise ValueError("bridge command must not be empty")
        if not (MIN_TIMEOUT_S <= self.timeout_s <= MAX_TIMEOUT_S):
            raise ValueError(
                f"timeout must be within [{MIN_TIMEOUT_S}, {MAX_TIMEOUT_S}] seconds"
            )


@dataclass(frozen=True)
class BridgeResult:
    """Validated outcome of one request."""

    status: str  # "ok" or "failed"
    image: Optional[DocumentImage]
    changed_mask: Optional[np.ndarray]
    message: str = ""


def _write_mask_png(mask: np.ndarray, path: Path) -> None:
    from PIL import Image

    Image.fromarray((mask * 255).astype(np.uint8), mode="L").save(path, format="PNG")


def _load_response(path: Path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ProtocolViolation(f"tool wrote no response file at {path}")
    except json.JSONDecodeError as e:
        raise ProtocolViolation(f"response is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise ProtocolViolation("response JSON must be an object")
    return data


def run_generator(
    config: BridgeConfig,
    image: DocumentImage,
    hole: BinaryMaskRegion,
    kind: str = "inpaint",
    text: Optional[str] = None,
    work_dir: Optional[Path] = None,
) -> BridgeResult:
    """Execute one request against the external tool and validate it.

    Raises GeneratorTimeout, ProcessFailure, ProtocolViolation, or
    OutsideMaskModified for each distinct failure mode. A tool that
    answers with a well-formed failure status is not an error; that
    surfaces as BridgeResult(status="failed") so the caller can skip
    the sample and move on.
    """
    if kind not in REQUEST_KINDS:
        raise ValueError(f"unknown request kind: {kind!r}")
    if kind == "text_style_transfer" and not text:
        raise ValueError("text_style_transfer requests need the replacement text")

    import tempfile

    owned = work_dir is None
    tmp = Path(tempfile.mkdtemp(prefix="docforge_bridge_")) if owned else Path(work_dir)
    tmp.mkdir(parents=True, exist_ok=True)
    try:
        request_id = uuid.uuid4().hex
        image_path = tmp / f"{request_id}_in.png"
        mask_path = tmp / f"{request_id}_mask.png"
        response_path = tmp / f"{request_id}_resp.json"
        request_path = tmp / f"{request_id}_req.json"

        image.save(image_path)
        full = np.zeros((image.height, image.width), dtype=np.uint8)
        r = hole.region
        full[r.y : r.y2, r.x : r.x2] = hole.mask
        _write_mask_png(full, mask_path)

        request = {
            "request_id": request_id,
            "kind": kind,
            "image_path": str(image_path),
            "mask_path": str(mask_path),
            "response_path": str(response_path),
        }
        if kind == "text_style_transfer":
            request["text"] = text
        with open(request_path, "w", encoding="utf-8") as f:
            json.dump(request, f, sort_keys=True)

        argv = list(config.command) + [str(request_path)]
        try:
            proc = subprocess.run(
                argv, capture_output=True, text=True, timeout=config.timeout_s
            )
        except subprocess.TimeoutExpired:
            raise GeneratorTimeout(
                f"generator exceeded {config.timeout_s:.0f}s: {argv[0]}"
            )
        if proc.returncode != 0:
            tail = (proc.stderr or proc.stdout or "").strip()[-400:]
            raise ProcessFailure(
                f"generator exited with code {proc.returncode}: {tail}"
            )

        response = _load_response(response_path)
        if response.get("request_id") != request_id:
            raise ProtocolViolation(
                f"response request_id {response.get('request_id')!r} does not match"
            )
        status = response.get("status")
        if status == "failed":
            return BridgeResult(
                status="failed", image=None, changed_mask=None,
                message=str(response.get("message", "")),
            )
        if status != "ok":
            raise ProtocolViolation(f"response status must be ok or failed, got {status!r}")

        output_path = response.get("output_path")
        if not isinstance(output_path, str) or not Path(output_path).is_file():
            raise ProtocolViolation(f"response output_path missing or not a file: {output_path!r}")
        try:
            produced = DocumentImage.load(Path(output_path), id=image.id)
        except (OSError, ValueError) as e:
            raise ProtocolViolation(f"output image unusable: {e}")
        if produced.pixels.shape != image.pixels.shape:
            raise ProtocolViolation(
                f"output is {produced.width}x{produced.height}, "
                f"input was {image.width}x{image.height}"
            )

        outside = full == 0
        delta = np.abs(
            produced.pixels.astype(np.int16) - image.pixels.astype(np.int16)
        ).max(axis=2)
        worst = int(delta[outside].max()) if outside.any() else 0
        if worst > OUTSIDE_MASK_TOLERANCE:
            raise OutsideMaskModified(
                f"tool changed pixels outside the mask by up to {worst} levels "
                f"(allowed {OUTSIDE_MASK_TOLERANCE})"
            )

        # Composite: in-mask pixels from the tool, everything else original.
        merged = image.pixels.copy()
        inside = full == 1
        merged[inside] = produced.pixels[inside]
        forged = image.with_pixels(merged)
        return BridgeResult(
            status="ok",
            image=forged,
            changed_mask=changed_pixels(image.pixels, merged),
            message=str(response.get("message", "")),
        )
    finally:
        if owned:
            import shutil

            shutil.rmtree(tmp, ignore_errors=True)


def bridged_inpaint(config: BridgeConfig):
    """Adapt the bridge to the patterns' inpaint hook signature."""

    def _inpaint(image: DocumentImage, hole: BinaryMaskRegion):
        result = run_generator(config, image, hole, kind="inpaint")
        if result.status != "ok":
            raise ProcessFailure(f"generator declined the request: {result.message}")
        return result.image, result.changed_mask, {"bridge": True}

    return _inpaint
