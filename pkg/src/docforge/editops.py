"""Low-level raster operations behind every forgery pattern.

Copy/paste with optional edge blending, Otsu binarization into string
images (glyphs over a transparent background), deterministic text
rendering from the bundled font set, and harmonic-diffusion inpainting.
All operations are pure: equal inputs give byte-identical outputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import NamedTuple, Optional

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .corpus import DocumentImage, Region
from .errors import (
    DegenerateHistogram,
    DimensionMismatch,
    EmptyText,
    FullyMaskedImage,
    OutOfBoundsRegion,
    UnknownFont,
)

# Luma weights for Otsu grayscale conversion (integer rounding).
_LUMA = (0.299, 0.587, 0.114)

INPAINT_MAX_ITERS = 5000
INPAINT_TOL = 0.5
# Gauss-Seidel is iterated past the caller's tolerance: stopping at a loose
# residual leaves a smooth error component up to residual/lambda_min, which
# for 16px holes is ~60x the residual. This floor keeps the fill within one
# intensity level of the exact harmonic solution.
_INPAINT_RESIDUAL_FLOOR = 0.005


@dataclass(frozen=True)
class Patch:
    """Small RGB raster cut from or destined for a document image."""

    pixels: np.ndarray  # (h, w, 3) uint8

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise ValueError(f"patch must be HxWx3 uint8, got {px.shape} {px.dtype}")

    @property
    def w(self) -> int:
        return self.pixels.shape[1]

    @property
    def h(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class StringImage:
    """Text glyphs over a transparent background: binary mask plus ink color."""

    glyph_mask: np.ndarray  # (h, w) uint8 in {0,1}
    fg_color: tuple[int, int, int]

    def __post_init__(self):
        m = self.glyph_mask
        if m.ndim != 2 or m.dtype != np.uint8:
            raise ValueError(f"glyph mask must be HxW uint8, got {m.shape} {m.dtype}")
        if not np.isin(m, (0, 1)).all():
            raise ValueError("glyph mask values must be 0 or 1")
        if int(m.sum()) == 0:
            raise ValueError("string image needs at least one foreground pixel")

    @property
    def w(self) -> int:
        return self.glyph_mask.shape[1]

    @property
    def h(self) -> int:
        return self.glyph_mask.shape[0]


@dataclass(frozen=True)
class BinaryMaskRegion:
    """Region plus a same-sized binary mask of pixels to synthesize."""

    region: Region
    mask: np.ndarray  # (region.h, region.w) uint8 in {0,1}

    def __post_init__(self):
        m = self.mask
        if m.shape != (self.region.h, self.region.w):
            raise DimensionMismatch(
                f"mask {m.shape} does not match region {self.region.h}x{self.region.w}"
            )
        if m.dtype != np.uint8 or not np.isin(m, (0, 1)).all():
            raise ValueError("hole mask values must be uint8 0 or 1")
        if int(m.sum()) == 0:
            raise ValueError("hole mask needs at least one set pixel")

    @classmethod
    def full(cls, region: Region) -> "BinaryMaskRegion":
        return cls(region, np.ones((region.h, region.w), dtype=np.uint8))


def _require_in_bounds(image: DocumentImage, region: Region):
    if not region.fits_in(image.width, image.height):
        raise OutOfBoundsRegion(
            f"region ({region.x},{region.y},{region.w},{region.h}) "
            f"outside {image.width}x{image.height} image"
        )


def changed_pixels(before: np.ndarray, after: np.ndarray) -> np.ndarray:
    """Binary (h, w) raster: 1 where any channel differs."""
    if before.shape != after.shape:
        raise DimensionMismatch(f"{before.shape} vs {after.shape}")
    return np.any(before != after, axis=2).astype(np.uint8)


# --- copy / paste ---

def copy_region(image: DocumentImage, region: Region) -> Patch:
    """Cut the region's pixels out byte-for-byte."""
    _require_in_bounds(image, region)
    return Patch(image.pixels[region.y:region.y2, region.x:region.x2].copy())


def paste_patch(
    image: DocumentImage,
    patch: Patch,
    target: Region,
    blend_radius: int = 0,
) -> tuple[DocumentImage, np.ndarray]:
    """Overlay the patch on the target region.

    blend_radius 0 pastes exactly; radius r in [1,4] applies a linear alpha
    ramp of that width at the target boundary (alpha 1 in the interior).
    Returns the edited image and the changed-pixel mask, which is 1 exactly
    where the output differs from the input.
    """
    _require_in_bounds(image, target)
    if (patch.h, patch.w) != (target.h, target.w):
        raise DimensionMismatch(
            f"patch {patch.w}x{patch.h} vs target {target.w}x{target.h}"
        )
    if not 0 <= blend_radius <= 4:
        raise ValueError(f"blend_radius must be in [0,4], got {blend_radius}")

    out = image.pixels.copy()
    window = out[target.y:target.y2, target.x:target.x2]
    if blend_radius == 0:
        window[:] = patch.pixels
    else:
        ys = np.arange(target.h)[:, None]
        xs = np.arange(target.w)[None, :]
        border_dist = np.minimum(
            np.minimum(ys, target.h - 1 - ys), np.minimum(xs, target.w - 1 - xs)
        )
        alpha = np.minimum((border_dist + 1) / (blend_radius + 1), 1.0)[:, :, None]
        blended = alpha * patch.pixels.astype(np.float64) + (1.0 - alpha) * window.astype(np.float64)
        window[:] = np.clip(np.rint(blended), 0, 255).astype(np.uint8)

    mask = changed_pixels(image.pixels, out)
    return image.with_pixels(out), mask


# --- binarization ---

def _int_luma(pixels: np.ndarray) -> np.ndarray:
    f = (
        _LUMA[0] * pixels[..., 0].astype(np.float64)
        + _LUMA[1] * pixels[..., 1].astype(np.float64)
        + _LUMA[2] * pixels[..., 2].astype(np.float64)
    )
    return np.rint(f).astype(np.int64)


def otsu_threshold(luma: np.ndarray) -> int:
    """Threshold t maximizing between-class variance of {<=t} vs {>t}.

    The score comparison runs in exact integer arithmetic, so the argmax
    agrees bit-for-bit with an exhaustive brute-force search. Ties resolve
    to the smallest threshold.
    """
    hist = np.bincount(luma.ravel(), minlength=256)
    n = int(luma.size)
    if int(np.count_nonzero(hist)) < 2:
        raise DegenerateHistogram("single gray level; no threshold separates two classes")

    counts = hist.tolist()
    levels_weighted = (hist * np.arange(256, dtype=np.int64)).tolist()
    total_sum = sum(levels_weighted)

    best_t, best_num, best_den = -1, -1, 1
    n0 = 0
    s0 = 0
    for t in range(256):
        n0 += counts[t]
        s0 += levels_weighted[t]
        n1 = n - n0
        if n0 == 0 or n1 == 0:
            continue
        s1 = total_sum - s0
        # between-class variance ~ (s0*n1 - s1*n0)^2 / (n0*n1), exact ints
        diff = s0 * n1 - s1 * n0
        num = diff * diff
        den = n0 * n1
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def binarize_otsu(patch: Patch) -> StringImage:
    """Binarize to a string image; the darker class is the foreground."""
    luma = _int_luma(patch.pixels)
    t = otsu_threshold(luma)
    fg = (luma <= t).astype(np.uint8)
    fg_pixels = patch.pixels[fg.astype(bool)]
    color = tuple(int(v) for v in np.rint(fg_pixels.mean(axis=0)))
    return StringImage(glyph_mask=fg, fg_color=color)


# --- text rendering ---

def _font_registry() -> dict[str, dict]:
    pkg = resources.files("docforge") / "fonts"
    manifest = json.loads((pkg / "manifest.json").read_text(encoding="utf-8"))
    return manifest["fonts"]


_FONT_CACHE: dict[tuple[str, int], ImageFont.FreeTypeFont] = {}


def available_fonts() -> list[str]:
    return sorted(_font_registry())


def _load_font(name: str, size: int) -> ImageFont.FreeTypeFont:
    key = (name, size)
    if key not in _FONT_CACHE:
        registry = _font_registry()
        if name not in registry:
            raise UnknownFont(f"font {name!r} not bundled; have {sorted(registry)}")
        path = resources.files("docforge") / "fonts" / registry[name]["file"]
        with resources.as_file(path) as p:
            _FONT_CACHE[key] = ImageFont.truetype(str(p), size)
    return _FONT_CACHE[key]


def _render_ink(text: str, font_name: str, size: int) -> np.ndarray:
    """Anti-aliased ink intensity (h, w) uint8, cropped to the ink bbox."""
    font = _load_font(font_name, size)
    pad = max(8, size)
    probe = ImageDraw.Draw(Image.new("L", (1, 1)))
    x0, y0, x1, y1 = probe.textbbox((pad, pad), text, font=font)
    canvas = Image.new("L", (x1 + pad, y1 + pad), 0)
    ImageDraw.Draw(canvas).text((pad, pad), text, fill=255, font=font)
    ink = np.asarray(canvas)
    rows = np.flatnonzero(ink.max(axis=1))
    cols = np.flatnonzero(ink.max(axis=0))
    if rows.size == 0:
        return np.zeros((0, 0), dtype=np.uint8)
    return ink[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]


def _render_sized_ink(text: str, font_name: str, px_height: int) -> np.ndarray:
    """Ink raster whose height is px_height or slightly above it.

    The point size is calibrated from a large reference render, then bumped
    until the ink extent reaches the requested height.
    """
    ref = _render_ink(text, font_name, 64)
    if ref.size == 0:
        raise EmptyText(f"text {text!r} rendered no glyphs")
    size = max(4, round(64 * px_height / ref.shape[0]))
    for _ in range(16):
        ink = _render_ink(text, font_name, size)
        if ink.size and ink.shape[0] >= px_height:
            return ink
        size += 1
    return ink


def render_text(
    text: str,
    font: str,
    px_height: int,
    color: tuple[int, int, int],
) -> Patch:
    """Render text tightly cropped, deterministic for fixed inputs.

    Ink height lands in [px_height, px_height*4/3) to leave room for
    ascenders and descenders. Glyphs are anti-aliased against white.
    """
    if not text:
        raise EmptyText("cannot render empty text")
    if px_height < 4:
        raise ValueError(f"px_height must be >= 4, got {px_height}")
    ink = _render_sized_ink(text, font, px_height)
    alpha = ink.astype(np.float64)[:, :, None] / 255.0
    fg = np.array(color, dtype=np.float64)[None, None, :]
    bg = np.full(3, 255.0)[None, None, :]
    rgb = np.rint(alpha * fg + (1.0 - alpha) * bg)
    return Patch(np.clip(rgb, 0, 255).astype(np.uint8))


def glyph_coverage(text: str, font: str, px_height: int) -> int:
    """Pixels with at least half ink, from the same render as render_text."""
    if not text:
        raise EmptyText("cannot measure empty text")
    ink = _render_sized_ink(text, font, px_height)
    return int((ink >= 128).sum())


def match_font_to_height(box_height: int) -> str:
    """Bundled font whose x-glyph ink height at the box's nominal size is
    closest to the box height; name order breaks ties."""
    best = None
    for name in available_fonts():
        ink = _render_ink("x", name, max(4, box_height))
        measure = ink.shape[0] if ink.size else 0
        score = abs(measure - box_height)
        if best is None or score < best[0]:
            best = (score, name)
    return best[1]


# --- string-image pasting ---

def paste_string_image(
    image: DocumentImage,
    s: StringImage,
    at: tuple[int, int],
) -> tuple[DocumentImage, np.ndarray]:
    """Stamp the glyphs' foreground color at (x, y); background is untouched.

    The changed mask is the placed glyph mask restricted to pixels whose
    value actually changed.
    """
    x, y = at
    target = Region(x, y, s.w, s.h)
    _require_in_bounds(image, target)
    out = image.pixels.copy()
    window = out[y:y + s.h, x:x + s.w]
    glyph = s.glyph_mask.astype(bool)
    window[glyph] = np.array(s.fg_color, dtype=np.uint8)
    mask = changed_pixels(image.pixels, out)
    return image.with_pixels(out), mask


# --- inpainting ---

class InpaintResult(NamedTuple):
    image: DocumentImage
    changed_mask: np.ndarray
    info: dict


def inpaint_diffusion(
    image: DocumentImage,
    hole: BinaryMaskRegion,
    max_iters: int = INPAINT_MAX_ITERS,
    tol: float = INPAINT_TOL,
) -> InpaintResult:
    """Fill the hole with the harmonic (Laplace) interpolant of its boundary.

    Red-black Gauss-Seidel sweeps in a fixed order; converged when the max
    absolute residual of the discrete Laplace equation drops below tol
    (internally below min(tol, residual floor)). Non-convergence within
    max_iters is reported in the info dict, not raised. Pixels outside the
    hole are never modified.
    """
    region = hole.region
    _require_in_bounds(image, region)
    holes = np.zeros((image.height, image.width), dtype=bool)
    holes[region.y:region.y2, region.x:region.x2] = hole.mask.astype(bool)
    if holes.all():
        raise FullyMaskedImage("hole covers the entire image; no boundary data")

    # Work on the hole's bounding box padded by one pixel of boundary.
    y0 = max(region.y - 1, 0)
    y1 = min(region.y2 + 1, image.height)
    x0 = max(region.x - 1, 0)
    x1 = min(region.x2 + 1, image.width)
    sub = image.pixels[y0:y1, x0:x1].astype(np.float64)
    sub_holes = holes[y0:y1, x0:x1]

    # Seed hole pixels with the mean of the known pixels in the window.
    known = ~sub_holes
    seed = sub[known].mean(axis=0)
    sub[sub_holes] = seed

    hh, ww = sub_holes.shape
    ys, xs = np.nonzero(sub_holes)
    parity = (ys + xs) % 2
    red = (ys[parity == 0], xs[parity == 0])
    black = (ys[parity == 1], xs[parity == 1])

    # Neighbor count per hole pixel (image-border pixels average fewer).
    deg = np.full((hh, ww), 4.0)
    if y0 == 0:
        deg[0, :] -= 1
    if y1 == image.height:
        deg[-1, :] -= 1
    if x0 == 0:
        deg[:, 0] -= 1
    if x1 == image.width:
        deg[:, -1] -= 1

    # Border-edge padding duplicates the edge row/column; zero those
    # contributions so true image borders act as missing neighbors.
    up_ok = np.ones((hh, ww)) if y0 > 0 else np.pad(np.ones((hh - 1, ww)), ((1, 0), (0, 0)))
    down_ok = np.ones((hh, ww)) if y1 < image.height else np.pad(np.ones((hh - 1, ww)), ((0, 1), (0, 0)))
    left_ok = np.ones((hh, ww)) if x0 > 0 else np.pad(np.ones((hh, ww - 1)), ((0, 0), (1, 0)))
    right_ok = np.ones((hh, ww)) if x1 < image.width else np.pad(np.ones((hh, ww - 1)), ((0, 0), (0, 1)))

    def neighbor_sum(arr: np.ndarray) -> np.ndarray:
        p = np.pad(arr, ((1, 1), (1, 1), (0, 0)), mode="edge")
        return (
            p[:-2, 1:-1] * up_ok[:, :, None]
            + p[2:, 1:-1] * down_ok[:, :, None]
            + p[1:-1, :-2] * left_ok[:, :, None]
            + p[1:-1, 2:] * right_ok[:, :, None]
        )

    target = min(float(tol), _INPAINT_RESIDUAL_FLOOR)
    converged = False
    iters = 0
    residual = float("inf")
    for iters in range(1, max_iters + 1):
        nsum = neighbor_sum(sub)
        sub[red[0], red[1]] = nsum[red[0], red[1]] / deg[red[0], red[1], None]
        nsum = neighbor_sum(sub)
        sub[black[0], black[1]] = nsum[black[0], black[1]] / deg[black[0], black[1], None]
        nsum = neighbor_sum(sub)
        res = sub[sub_holes] - nsum[sub_holes] / deg[sub_holes, None]
        residual = float(np.abs(res).max()) if res.size else 0.0
        if residual < target:
            converged = True
            break

    out = image.pixels.copy()
    filled = np.clip(np.rint(sub), 0, 255).astype(np.uint8)
    win = out[y0:y1, x0:x1]
    win[sub_holes] = filled[sub_holes]

    mask = changed_pixels(image.pixels, out)
    info = {
        "iterations": iters,
        "converged": bool(converged or residual < tol),
        "residual": residual,
    }
    return InpaintResult(image.with_pixels(out), mask, info)
