"""Deterministic synthetic receipt corpus.

Real scanned receipts cannot ship with the repository, so tests and demos
run on generated ones: cream paper with film grain, a store header, a column
of item lines with right-aligned prices, and a totals block. Word boxes are
the exact ink bounding boxes of what was drawn, and the right and bottom
margins are kept clear so every editing pattern has room to work.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .corpus import (
    DocumentImage,
    OcrAnnotation,
    Region,
    WordBox,
    write_annotation,
)
from .editops import binarize_otsu, paste_string_image, render_text

RECEIPT_WIDTH = 384
RECEIPT_HEIGHT = 512
# Blank strip kept along the right edge for margin/addition targets.
RIGHT_MARGIN = 88

_STORES = [
    "LUNAMART", "QUICKSTOP", "GREENWAY", "CORNER DELI", "DAILY GOODS",
    "SUNRISE CAFE", "METRO FOODS", "HARBOR SHOP",
]
_ITEMS = [
    "MILK", "BREAD", "EGGS", "COFFEE", "APPLES", "CHEESE", "RICE",
    "PASTA", "JUICE", "BUTTER", "TEA", "SOAP", "ONIONS", "YOGURT",
    "CEREAL", "HONEY", "FLOUR", "SUGAR", "BEANS", "TOMATOES",
]


def _paper(rng: np.random.Generator) -> np.ndarray:
    base = np.array([
        int(rng.integers(238, 249)),
        int(rng.integers(236, 247)),
        int(rng.integers(228, 241)),
    ])
    page = np.broadcast_to(base, (RECEIPT_HEIGHT, RECEIPT_WIDTH, 3)).astype(np.float64)
    grain = rng.normal(0.0, 2.5, size=page.shape)
    return np.clip(page + grain, 0, 255).round().astype(np.uint8)


def _stamp(
    image: DocumentImage,
    text: str,
    x: int,
    y: int,
    px_height: int,
    color: tuple[int, int, int],
    font: str,
) -> tuple[DocumentImage, Region]:
    """Draw text through the binarized-glyph path so paper grain survives."""
    s = binarize_otsu(render_text(text, font, px_height=px_height, color=color))
    s = type(s)(glyph_mask=s.glyph_mask, fg_color=color)
    out, _ = paste_string_image(image, s, (x, y))
    return out, Region(x, y, s.w, s.h)


def make_receipt(doc_id: str, seed: int) -> tuple[DocumentImage, OcrAnnotation]:
    """One receipt image plus its word-level annotation."""
    rng = np.random.default_rng(seed)
    image = DocumentImage(doc_id, _paper(rng))
    ink = (
        int(rng.integers(18, 48)),
        int(rng.integers(18, 48)),
        int(rng.integers(18, 52)),
    )
    words: list[WordBox] = []

    store = _STORES[int(rng.integers(len(_STORES)))]
    y = int(rng.integers(18, 30))
    x = 24
    for part in store.split():
        image, rect = _stamp(image, part, x, y, 20, ink, "sans-bold")
        words.append(WordBox(rect, part, tag="header"))
        x = rect.x2 + 10
    y += 34

    n_items = int(rng.integers(6, 11))
    price_right = RECEIPT_WIDTH - RIGHT_MARGIN
    subtotal = 0
    used = rng.permutation(len(_ITEMS))[:n_items]
    for idx in used:
        item = _ITEMS[int(idx)]
        cents = int(rng.integers(80, 2500))
        subtotal += cents
        image, rect = _stamp(image, item, 24, y, 14, ink, "mono")
        words.append(WordBox(rect, item, tag="item"))
        price = f"{cents // 100}.{cents % 100:02d}"
        pw = _glyph_width(price, 14)
        image, prect = _stamp(image, price, price_right - pw, y, 14, ink, "mono")
        words.append(WordBox(prect, price, tag="price"))
        y += int(rng.integers(22, 27))

    y += 12
    tax = subtotal * 8 // 100
    for label, cents, tag in (
        ("SUBTOTAL", subtotal, "subtotal"),
        ("TAX", tax, "tax"),
        ("TOTAL", subtotal + tax, "total"),
    ):
        image, rect = _stamp(image, label, 24, y, 15, ink, "sans")
        words.append(WordBox(rect, label, tag=tag))
        amount = f"{cents // 100}.{cents % 100:02d}"
        aw = _glyph_width(amount, 15)
        image, arect = _stamp(image, amount, price_right - aw, y, 15, ink, "mono")
        words.append(WordBox(arect, amount, tag=f"{tag}_amount"))
        y += 26

    annot = OcrAnnotation(
        document_id=doc_id,
        image_width=RECEIPT_WIDTH,
        image_height=RECEIPT_HEIGHT,
        words=tuple(words),
    )
    return image, annot


def _glyph_width(text: str, px_height: int) -> int:
    s = binarize_otsu(render_text(text, "mono", px_height=px_height, color=(0, 0, 0)))
    return s.w


def write_corpus(out_dir: Path, n_documents: int, seed: int = 0) -> list[str]:
    """Materialize a corpus directory of paired PNG + JSON files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids = []
    for i in range(n_documents):
        doc_id = f"receipt_{i:04d}"
        image, annot = make_receipt(doc_id, seed=seed * 1_000_003 + i)
        image.save(out_dir / f"{doc_id}.png")
        write_annotation(annot, out_dir / f"{doc_id}.json")
        ids.append(doc_id)
    return ids
