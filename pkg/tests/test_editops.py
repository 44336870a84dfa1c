import numpy as np
import pytest

from docforge.corpus import DocumentImage, Region
from docforge.editops import (
    BinaryMaskRegion,
    Patch,
    available_fonts,
    binarize_otsu,
    changed_pixels,
    copy_region,
    glyph_coverage,
    inpaint_diffusion,
    match_font_to_height,
    otsu_threshold,
    paste_patch,
    paste_string_image,
    render_text,
)
from docforge.errors import (
    DegenerateHistogram,
    DimensionMismatch,
    EmptyText,
    FullyMaskedImage,
    OutOfBoundsRegion,
    UnknownFont,
)
from oracles import dense_harmonic_fill, otsu_exhaustive


def _img(rng, h=64, w=64):
    return DocumentImage("t", rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))


def test_changed_pixels():
    a = np.zeros((4, 5, 3), dtype=np.uint8)
    b = a.copy()
    b[1, 2, 0] = 1
    b[3, 4] = (9, 9, 9)
    mask = changed_pixels(a, b)
    assert mask.sum() == 2 and mask[1, 2] == 1 and mask[3, 4] == 1
    with pytest.raises(DimensionMismatch):
        changed_pixels(a, np.zeros((4, 4, 3), dtype=np.uint8))


def test_copy_region_bounds(rng):
    img = _img(rng)
    patch = copy_region(img, Region(10, 12, 8, 6))
    assert patch.pixels.shape == (6, 8, 3)
    assert np.array_equal(patch.pixels, img.pixels[12:18, 10:18])
    with pytest.raises(OutOfBoundsRegion):
        copy_region(img, Region(60, 60, 8, 8))


def test_paste_patch_exact(rng):
    img = _img(rng)
    patch = Patch(rng.integers(0, 256, size=(6, 8, 3), dtype=np.uint8))
    target = Region(5, 7, 8, 6)
    out, mask = paste_patch(img, patch, target)
    assert np.array_equal(out.pixels[7:13, 5:13], patch.pixels)
    assert np.array_equal(changed_pixels(img.pixels, out.pixels), mask)
    outside = np.ones((64, 64), dtype=bool)
    outside[7:13, 5:13] = False
    assert mask[outside].sum() == 0
    with pytest.raises(DimensionMismatch):
        paste_patch(img, patch, Region(5, 7, 6, 8))


def test_paste_patch_blend(rng):
    img = _img(rng)
    patch = Patch(rng.integers(0, 256, size=(12, 12, 3), dtype=np.uint8))
    target = Region(20, 20, 12, 12)
    out, mask = paste_patch(img, patch, target, blend_radius=2)
    # interior (alpha = 1) is an exact copy
    assert np.array_equal(out.pixels[22:30, 22:30], patch.pixels[2:10, 2:10])
    # mask equals the true diff even where blending rounds back to the original
    assert np.array_equal(changed_pixels(img.pixels, out.pixels), mask)
    with pytest.raises(ValueError):
        paste_patch(img, patch, target, blend_radius=9)


def test_otsu_two_level():
    # levels 10 and 200: any t in [10, 199] separates them; smallest wins
    luma = np.array([[10] * 6 + [200] * 4])
    assert otsu_threshold(luma) == 10


def test_otsu_degenerate():
    with pytest.raises(DegenerateHistogram):
        otsu_threshold(np.full((5, 5), 77))


def test_otsu_matches_exhaustive(rng):
    for _ in range(40):
        h, w = int(rng.integers(3, 12)), int(rng.integers(3, 12))
        kind = int(rng.integers(3))
        if kind == 0:
            luma = rng.integers(0, 256, size=(h, w))
        elif kind == 1:  # near-bimodal
            lo = rng.integers(0, 60, size=(h, w))
            hi = rng.integers(180, 256, size=(h, w))
            luma = np.where(rng.random((h, w)) < 0.4, lo, hi)
        else:  # narrow band provokes ties
            luma = rng.integers(117, 123, size=(h, w))
        if len(np.unique(luma)) < 2:
            continue
        assert otsu_threshold(luma) == otsu_exhaustive(luma)


def test_binarize_otsu_picks_dark_foreground(rng):
    pixels = np.full((10, 20, 3), 230, dtype=np.uint8)
    pixels[3:7, 2:18] = (40, 30, 20)
    s = binarize_otsu(Patch(pixels))
    assert s.glyph_mask.shape == (10, 20)
    assert s.glyph_mask[5, 10] == 1 and s.glyph_mask[0, 0] == 0
    assert s.fg_color == (40, 30, 20)
    assert s.glyph_mask.sum() == 4 * 16


def test_render_text_basics():
    patch = render_text("123", "mono", px_height=16, color=(20, 20, 20))
    assert patch.h >= 13 and patch.w > patch.h  # three glyphs wide
    again = render_text("123", "mono", px_height=16, color=(20, 20, 20))
    assert np.array_equal(patch.pixels, again.pixels)
    assert glyph_coverage("123", "mono", 16) > 0
    with pytest.raises(UnknownFont):
        render_text("x", "comic-sans", px_height=16, color=(0, 0, 0))
    with pytest.raises(EmptyText):
        render_text("", "mono", px_height=16, color=(0, 0, 0))


def test_match_font_to_height_registered():
    for h in (6, 12, 20, 40):
        assert match_font_to_height(h) in available_fonts()


def test_paste_string_image(rng):
    img = _img(rng, 64, 64)
    glyphs = np.zeros((8, 12), dtype=np.uint8)
    glyphs[2:6, 3:9] = 1
    from docforge.editops import StringImage

    s = StringImage(glyph_mask=glyphs, fg_color=(5, 6, 7))
    out, mask = paste_string_image(img, s, (10, 20))
    window = out.pixels[20:28, 10:22]
    assert (window[2:6, 3:9] == (5, 6, 7)).all()
    # background rows of the string image leave pixels untouched
    assert np.array_equal(window[0], img.pixels[20, 10:22])
    assert np.array_equal(changed_pixels(img.pixels, out.pixels), mask)


def test_inpaint_matches_dense_solve(rng):
    for _ in range(10):
        img = _img(rng, 64, 64)
        hw = int(rng.integers(3, 13))
        hh = int(rng.integers(3, 13))
        x = int(rng.integers(0, 64 - hw))
        y = int(rng.integers(0, 64 - hh))
        hole = BinaryMaskRegion.full(Region(x, y, hw, hh))
        result = inpaint_diffusion(img, hole, tol=0.1)
        holes = np.zeros((64, 64), dtype=bool)
        holes[y:y + hh, x:x + hw] = True
        expected = np.clip(np.rint(dense_harmonic_fill(img.pixels, holes)), 0, 255)
        diff = np.abs(result.image.pixels.astype(int) - expected.astype(int))
        assert diff.max() <= 1
        # untouched outside, mask consistent
        assert np.array_equal(
            changed_pixels(img.pixels, result.image.pixels), result.changed_mask
        )
        assert (result.changed_mask[~holes] == 0).all()
        assert result.info["converged"]


def test_inpaint_hole_at_border(rng):
    img = _img(rng, 64, 64)
    hole = BinaryMaskRegion.full(Region(0, 0, 10, 6))
    result = inpaint_diffusion(img, hole, tol=0.1)
    holes = np.zeros((64, 64), dtype=bool)
    holes[0:6, 0:10] = True
    expected = np.clip(np.rint(dense_harmonic_fill(img.pixels, holes)), 0, 255)
    assert np.abs(result.image.pixels.astype(int) - expected.astype(int)).max() <= 1


def test_inpaint_rejects_full_image(rng):
    img = _img(rng, 64, 64)
    with pytest.raises(FullyMaskedImage):
        inpaint_diffusion(img, BinaryMaskRegion.full(Region(0, 0, 64, 64)))


def test_inpaint_partial_mask(rng):
    img = _img(rng, 64, 64)
    mask = np.zeros((8, 8), dtype=np.uint8)
    mask[2:6, 2:6] = 1
    hole = BinaryMaskRegion(Region(10, 10, 8, 8), mask)
    result = inpaint_diffusion(img, hole, tol=0.1)
    holes = np.zeros((64, 64), dtype=bool)
    holes[12:16, 12:16] = True
    expected = np.clip(np.rint(dense_harmonic_fill(img.pixels, holes)), 0, 255)
    assert np.abs(result.image.pixels.astype(int) - expected.astype(int)).max() <= 1
    assert (result.changed_mask[~holes] == 0).all()
