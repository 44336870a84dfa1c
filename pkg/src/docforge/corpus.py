"""Document images, OCR annotations, and editing-target selection.

Annotation files are UTF-8 JSON with fields
``{document_id, image_width, image_height, words: [{x, y, w, h, text, tag?}]}``.
Blank-area detection scans stride-aligned windows and accepts a window when
it overlaps no word box and every channel's pixel standard deviation stays
below ``BLANK_STD_MAX``. The variance test is done in exact integer
arithmetic so results are bit-reproducible and oracle-checkable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image

from .errors import (
    MalformedAnnotation,
    MissingImageRef,
    NoMatchingTarget,
    OutOfBoundsBox,
)

# Blank-area criterion: per-channel std below this (of 255), tolerating paper
# grain and JPEG noise while rejecting printed content.
BLANK_STD_MAX = 8
# Candidate windows are enumerated on this stride grid.
BLANK_SCAN_STRIDE = 8
# Window sizes tried per scan, as multiples of (min_w, min_h), largest first.
BLANK_SCAN_SCALES = (4, 2, 1)

MIN_IMAGE_SIDE = 64


@dataclass(frozen=True)
class Region:
    """Axis-aligned pixel rectangle, top-left anchored."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"region must be at least 1x1, got {self.w}x{self.h}")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"region origin must be non-negative, got ({self.x},{self.y})")

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    def fits_in(self, width: int, height: int) -> bool:
        return self.x2 <= width and self.y2 <= height

    def intersects(self, other: "Region") -> bool:
        """True when the rectangles share at least one pixel."""
        return (
            self.x < other.x2
            and other.x < self.x2
            and self.y < other.y2
            and other.y < self.y2
        )

    def contains(self, other: "Region") -> bool:
        return (
            self.x <= other.x
            and self.y <= other.y
            and other.x2 <= self.x2
            and other.y2 <= self.y2
        )


class DocumentImage:
    """RGB document raster, 8 bits per channel, immutable after construction."""

    def __init__(self, id: str, pixels: np.ndarray):
        pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValueError(f"expected HxWx3 uint8 raster, got shape {pixels.shape}")
        h, w = pixels.shape[:2]
        if w < MIN_IMAGE_SIDE or h < MIN_IMAGE_SIDE:
            raise ValueError(f"document images must be at least {MIN_IMAGE_SIDE}px a side, got {w}x{h}")
        pixels.flags.writeable = False
        self.id = id
        self.pixels = pixels

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def with_pixels(self, pixels: np.ndarray) -> "DocumentImage":
        return DocumentImage(self.id, pixels)

    @classmethod
    def load(cls, path: Union[str, Path], id: Optional[str] = None) -> "DocumentImage":
        path = Path(path)
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"))
        return cls(id if id is not None else path.stem, arr)

    def save(self, path: Union[str, Path]):
        Image.fromarray(self.pixels, mode="RGB").save(path, format="PNG")


@dataclass(frozen=True)
class WordBox:
    """One recognized word: its box, content, and optional semantic tag."""

    rect: Region
    text: str
    tag: Optional[str] = None

    def __post_init__(self):
        if not self.text:
            raise ValueError("word box text must be non-empty")


@dataclass(frozen=True)
class OcrAnnotation:
    """Recognized words of one document, with the image dimensions the
    boxes were validated against."""

    document_id: str
    image_width: int
    image_height: int
    words: tuple[WordBox, ...] = field(default_factory=tuple)

    def words_tagged(self, tag: Optional[str]) -> list[WordBox]:
        if tag is None:
            return list(self.words)
        return [w for w in self.words if w.tag == tag]


# --- annotation file I/O ---

def parse_annotations(path: Union[str, Path]) -> OcrAnnotation:
    """Parse one annotation file, validating every box in-bounds."""
    raw = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise MalformedAnnotation(f"{path}: invalid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise MalformedAnnotation(f"{path}: top level must be an object")

    document_id = doc.get("document_id")
    if not isinstance(document_id, str) or not document_id:
        raise MissingImageRef(f"{path}: missing or empty document_id")

    try:
        width = int(doc["image_width"])
        height = int(doc["image_height"])
        raw_words = doc["words"]
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedAnnotation(f"{path}: missing or invalid field: {e}") from e
    if width < 1 or height < 1 or not isinstance(raw_words, list):
        raise MalformedAnnotation(f"{path}: invalid image dimensions or words list")

    words = []
    for i, entry in enumerate(raw_words):
        if not isinstance(entry, dict):
            raise MalformedAnnotation(f"{path}: words[{i}] is not an object")
        try:
            rect = Region(int(entry["x"]), int(entry["y"]), int(entry["w"]), int(entry["h"]))
            text = entry["text"]
            tag = entry.get("tag")
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedAnnotation(f"{path}: words[{i}]: {e}") from e
        if not isinstance(text, str) or not text:
            raise MalformedAnnotation(f"{path}: words[{i}]: text must be a non-empty string")
        if tag is not None and not isinstance(tag, str):
            raise MalformedAnnotation(f"{path}: words[{i}]: tag must be a string")
        if not rect.fits_in(width, height):
            raise OutOfBoundsBox(
                f"{path}: words[{i}] box ({rect.x},{rect.y},{rect.w},{rect.h}) "
                f"exceeds image {width}x{height}"
            )
        words.append(WordBox(rect=rect, text=text, tag=tag))

    return OcrAnnotation(
        document_id=document_id,
        image_width=width,
        image_height=height,
        words=tuple(words),
    )


def serialize_annotation(annot: OcrAnnotation) -> str:
    """Inverse of parse_annotations; round-trips structurally."""
    words = []
    for w in annot.words:
        entry = {"x": w.rect.x, "y": w.rect.y, "w": w.rect.w, "h": w.rect.h, "text": w.text}
        if w.tag is not None:
            entry["tag"] = w.tag
        words.append(entry)
    doc = {
        "document_id": annot.document_id,
        "image_width": annot.image_width,
        "image_height": annot.image_height,
        "words": words,
    }
    return json.dumps(doc, ensure_ascii=False, indent=2) + "\n"


def write_annotation(annot: OcrAnnotation, path: Union[str, Path]):
    Path(path).write_text(serialize_annotation(annot), encoding="utf-8")


def load_corpus(corpus_dir: Union[str, Path]) -> list[tuple[DocumentImage, OcrAnnotation]]:
    """Load every ``*.json`` annotation in a directory with its image.

    Images are ``{document_id}.png`` next to the annotation file. The
    annotation's recorded dimensions must match the actual image.
    """
    corpus_dir = Path(corpus_dir)
    pairs = []
    for annot_path in sorted(corpus_dir.glob("*.json")):
        annot = parse_annotations(annot_path)
        image_path = corpus_dir / f"{annot.document_id}.png"
        if not image_path.exists():
            raise MissingImageRef(f"{annot_path}: no image {image_path.name} in {corpus_dir}")
        image = DocumentImage.load(image_path, id=annot.document_id)
        if (image.width, image.height) != (annot.image_width, annot.image_height):
            raise MalformedAnnotation(
                f"{annot_path}: recorded size {annot.image_width}x{annot.image_height} "
                f"differs from image {image.width}x{image.height}"
            )
        pairs.append((image, annot))
    return pairs


# --- blank-area detection ---

def _box_sum(table: np.ndarray, x: int, y: int, w: int, h: int, c: int) -> int:
    return int(table[y + h, x + w, c] - table[y, x + w, c] - table[y + h, x, c] + table[y, x, c])


def _window_is_blank(sums: np.ndarray, sqsums: np.ndarray, x: int, y: int, w: int, h: int) -> bool:
    # Exact integer test: per-channel population std < BLANK_STD_MAX
    #   <=>  n*sum(px^2) - sum(px)^2 < BLANK_STD_MAX^2 * n^2
    n = w * h
    bound = (BLANK_STD_MAX * BLANK_STD_MAX) * n * n
    for c in range(3):
        s = _box_sum(sums, x, y, w, h, c)
        sq = _box_sum(sqsums, x, y, w, h, c)
        if n * sq - s * s >= bound:
            return False
    return True


def _integral(table: np.ndarray) -> np.ndarray:
    # (H+1, W+1, 3) zero-padded inclusive prefix sums, exact in int64
    h, w, _ = table.shape
    out = np.zeros((h + 1, w + 1, 3), dtype=np.int64)
    np.cumsum(np.cumsum(table, axis=0, dtype=np.int64), axis=1, out=out[1:, 1:, :])
    return out


def find_blank_regions(
    image: DocumentImage,
    annot: OcrAnnotation,
    min_w: int,
    min_h: int,
) -> list[Region]:
    """Find text-free, low-variance regions of at least min_w x min_h.

    Windows of sizes ``(min_w*s, min_h*s)`` for each scan scale are tried on
    the stride grid; survivors pass greedy non-overlap suppression largest
    first. Result is sorted by area descending. Empty list means no blank
    region (callers treat that as NoBlankRegion).
    """
    if min_w < 4 or min_h < 4:
        raise ValueError(f"minimum blank size is 4x4, got {min_w}x{min_h}")

    px = image.pixels.astype(np.int64)
    sums = _integral(px)
    sqsums = _integral(px * px)

    # Word coverage as its own integral image: a window is text-free iff its
    # covered-pixel count is zero (equivalent to zero-area rect intersection).
    covered = np.zeros((image.height, image.width, 1), dtype=np.int64)
    for word in annot.words:
        r = word.rect
        covered[r.y:r.y2, r.x:r.x2, 0] = 1
    cov_sums = _integral(covered)

    candidates: list[Region] = []
    for scale in BLANK_SCAN_SCALES:
        w, h = min_w * scale, min_h * scale
        if w > image.width or h > image.height:
            continue
        for y in range(0, image.height - h + 1, BLANK_SCAN_STRIDE):
            for x in range(0, image.width - w + 1, BLANK_SCAN_STRIDE):
                if _box_sum(cov_sums, x, y, w, h, 0) != 0:
                    continue
                if _window_is_blank(sums, sqsums, x, y, w, h):
                    candidates.append(Region(x, y, w, h))

    candidates.sort(key=lambda r: (-r.area, r.y, r.x, r.w))
    kept: list[Region] = []
    for cand in candidates:
        if not any(cand.intersects(k) for k in kept):
            kept.append(cand)
    return kept


# --- target selection ---

@dataclass(frozen=True)
class TaggedWord:
    """Target an existing word carrying this tag."""
    tag: str


@dataclass(frozen=True)
class AnyWord:
    """Target any existing word."""


@dataclass(frozen=True)
class AdjacentMargin:
    """Target a blank margin horizontally adjacent to a (tagged) word."""
    tag: Optional[str] = None


TargetPolicy = Union[TaggedWord, AnyWord, AdjacentMargin]


def _margin_for_word(
    word: WordBox,
    annot: OcrAnnotation,
    image: Optional[DocumentImage],
) -> Optional[Region]:
    """Word-sized blank region next to the word, right side preferred.

    Adjacency gap scans up to twice the word height. With an image given,
    candidates must also pass the pixel blankness test.
    """
    rect = word.rect
    max_gap = 2 * rect.h
    blank_check = None
    if image is not None:
        px = image.pixels.astype(np.int64)
        sums = _integral(px)
        sqsums = _integral(px * px)
        blank_check = (sums, sqsums)

    def ok(candidate: Region) -> bool:
        if not candidate.fits_in(annot.image_width, annot.image_height):
            return False
        if any(candidate.intersects(w.rect) for w in annot.words):
            return False
        if blank_check is not None:
            sums, sqsums = blank_check
            return _window_is_blank(sums, sqsums, candidate.x, candidate.y, candidate.w, candidate.h)
        return True

    for side in ("right", "left"):
        for gap in range(2, max_gap + 1, 2):
            if side == "right":
                x = rect.x2 + gap
            else:
                x = rect.x - gap - rect.w
                if x < 0:
                    break
            candidate = Region(x, rect.y, rect.w, rect.h)
            if ok(candidate):
                return candidate
    return None


def select_target(
    annot: OcrAnnotation,
    policy: TargetPolicy,
    rng: np.random.Generator,
    image: Optional[DocumentImage] = None,
) -> Union[WordBox, Region]:
    """Pick the edit target under the policy, uniformly among matches."""
    if isinstance(policy, (TaggedWord, AnyWord)):
        tag = policy.tag if isinstance(policy, TaggedWord) else None
        matches = annot.words_tagged(tag)
        if not matches:
            raise NoMatchingTarget(f"no word matches policy {policy}")
        return matches[int(rng.integers(len(matches)))]

    if isinstance(policy, AdjacentMargin):
        matches = annot.words_tagged(policy.tag)
        feasible = [(w, m) for w in matches
                    if (m := _margin_for_word(w, annot, image)) is not None]
        if not feasible:
            raise NoMatchingTarget(f"no blank margin adjacent to any word for {policy}")
        _, margin = feasible[int(rng.integers(len(feasible)))]
        return margin

    raise TypeError(f"unknown target policy: {policy!r}")
