"""The four editing patterns under each method family.

Every apply_* function edits one region of one document and returns the
forged image, the ground-truth mask, and a provenance record. Forged
pixels are the pixels that actually changed, so the core invariant --
forged image differs from the original exactly on the mask -- is testable
byte-for-byte. All randomness flows through the caller's generator; equal
seeds reproduce samples byte-identically.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .corpus import (
    AnyWord,
    DocumentImage,
    OcrAnnotation,
    Region,
    TargetPolicy,
    WordBox,
    find_blank_regions,
    select_target,
)
from .editops import (
    BinaryMaskRegion,
    StringImage,
    binarize_otsu,
    changed_pixels,
    copy_region,
    inpaint_diffusion,
    match_font_to_height,
    paste_patch,
    paste_string_image,
    render_text,
)
from .errors import (
    DegenerateHistogram,
    DegenerateSample,
    NoBlankRegion,
    NoDonorWord,
    NoMatchingTarget,
)

# Donor boxes may differ from the target by at most this much per side.
DONOR_SCALE_TOLERANCE = 0.20
# Background addition retries with fresh regions before giving up.
BACKGROUND_RETRIES = 8
# Emitted background-addition samples must change at least this many pixels.
BACKGROUND_MIN_CHANGED = 16
# Default minimum blank-region size scanned for addition targets.
DEFAULT_BLANK_MIN = (24, 12)


class EditPattern(Enum):
    TEXT_REMOVAL = "text_removal"
    TEXT_REPLACEMENT = "text_replacement"
    TEXT_ADDITION = "text_addition"
    BACKGROUND_ADDITION = "background_addition"


class MethodFamily(Enum):
    COPY_MOVE = "copy_move"
    GENERATIVE = "generative"
    MIX = "mix"


@dataclass(frozen=True, order=True)
class CaseKey:
    """One cell of the pattern-by-method taxonomy (9 valid combinations)."""

    pattern: EditPattern
    method: MethodFamily

    def __post_init__(self):
        if self.method is MethodFamily.MIX and self.pattern is not EditPattern.TEXT_REPLACEMENT:
            raise ValueError("the mix family applies to text replacement only")

    def __str__(self) -> str:
        return f"{self.pattern.value}/{self.method.value}"

    @classmethod
    def parse(cls, text: str) -> "CaseKey":
        pattern, _, method = text.partition("/")
        return cls(EditPattern(pattern), MethodFamily(method))

    @classmethod
    def all_cases(cls) -> list["CaseKey"]:
        cases = []
        for pattern in EditPattern:
            for method in (MethodFamily.COPY_MOVE, MethodFamily.GENERATIVE):
                cases.append(cls(pattern, method))
            if pattern is EditPattern.TEXT_REPLACEMENT:
                cases.append(cls(pattern, MethodFamily.MIX))
        return sorted(cases, key=str)


class GeneratorKind(Enum):
    IN_REPO = "in_repo"
    EXTERNAL_BRIDGE = "external_bridge"


@dataclass(frozen=True)
class EditRecord:
    """Full provenance of one forgery."""

    case: CaseKey
    target_region: Region
    seed: int
    source_region: Optional[Region] = None
    generator: GeneratorKind = GeneratorKind.IN_REPO
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.case.method is MethodFamily.COPY_MOVE and self.source_region is None:
            raise ValueError("copy-move records must carry a source region")


@dataclass(frozen=True)
class ForgeryMask:
    """Per-pixel ground truth: 0 authentic, 1 forged."""

    labels: np.ndarray  # (h, w) uint8 in {0,1}

    def __post_init__(self):
        m = self.labels
        if m.ndim != 2 or m.dtype != np.uint8 or not np.isin(m, (0, 1)).all():
            raise ValueError("mask labels must be HxW uint8 in {0,1}")

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def forged_fraction(self) -> float:
        return float(self.labels.mean())


ApplyResult = tuple[DocumentImage, ForgeryMask, EditRecord]

# Hook type for routing generative sub-operations to an external tool;
# the dataset builder installs a bridge-backed implementation here.
InpaintFn = Callable[[DocumentImage, BinaryMaskRegion], tuple[DocumentImage, np.ndarray, dict]]


def _default_inpaint(image: DocumentImage, hole: BinaryMaskRegion):
    out, mask, info = inpaint_diffusion(image, hole)
    return out, mask, info


def _finish(
    image: DocumentImage,
    forged: DocumentImage,
    mask: np.ndarray,
    record: EditRecord,
    min_changed: int = 1,
) -> ApplyResult:
    count = int(mask.sum())
    if count < min_changed:
        raise DegenerateSample(
            f"{record.case}: only {count} pixels changed (need >= {min_changed})"
        )
    fraction = count / mask.size
    if fraction >= 0.5:
        raise DegenerateSample(f"{record.case}: forged fraction {fraction:.3f} >= 0.5")
    return forged, ForgeryMask(mask), record


def _word_region_val(w: WordBox) -> list[int]:
    r = w.rect
    return [r.x, r.y, r.w, r.h]


def _pick_blank_source(
    image: DocumentImage,
    annot: OcrAnnotation,
    w: int,
    h: int,
    rng: np.random.Generator,
    exclude: Optional[Region] = None,
) -> Region:
    """w x h blank patch position, random within a random blank region."""
    regions = find_blank_regions(image, annot, min_w=w, min_h=h)
    if exclude is not None:
        regions = [r for r in regions if not r.intersects(exclude)]
    if not regions:
        raise NoBlankRegion(f"no blank region of at least {w}x{h}")
    region = regions[int(rng.integers(len(regions)))]
    ox = int(rng.integers(region.w - w + 1))
    oy = int(rng.integers(region.h - h + 1))
    return Region(region.x + ox, region.y + oy, w, h)


def _word_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1))


# --- text removal ---

def apply_text_removal(
    image: DocumentImage,
    annot: OcrAnnotation,
    family: MethodFamily,
    rng: np.random.Generator,
    policy: TargetPolicy = AnyWord(),
    inpaint: InpaintFn = _default_inpaint,
) -> ApplyResult:
    """Visually remove one word: blank-patch overlay or inpainting."""
    seed = _word_seed(rng)
    word = select_target(annot, policy, rng, image=image)
    if not isinstance(word, WordBox):
        raise NoMatchingTarget("text removal targets a word box, not a margin")
    target = word.rect
    case = CaseKey(EditPattern.TEXT_REMOVAL, family)

    if family is MethodFamily.COPY_MOVE:
        source = _pick_blank_source(image, annot, target.w, target.h, rng, exclude=target)
        patch = copy_region(image, source)
        forged, mask = paste_patch(image, patch, target, blend_radius=0)
        record = EditRecord(
            case=case, target_region=target, source_region=source, seed=seed,
            params={"word_text": word.text},
        )
        return _finish(image, forged, mask, record)

    if family is MethodFamily.GENERATIVE:
        hole = BinaryMaskRegion.full(target)
        forged, mask, info = inpaint(image, hole)
        record = EditRecord(
            case=case, target_region=target, seed=seed,
            params={"word_text": word.text, **{f"inpaint_{k}": v for k, v in info.items()}},
        )
        return _finish(image, forged, mask, record)

    raise ValueError(f"text removal supports copy_move or generative, not {family}")


# --- text replacement ---

def _donor_candidates(annot: OcrAnnotation, target_word: WordBox, image_w: int, image_h: int) -> list[WordBox]:
    t = target_word.rect
    out = []
    for w in annot.words:
        if w.rect == t or w.text == target_word.text:
            continue
        if abs(w.rect.w - t.w) > DONOR_SCALE_TOLERANCE * t.w:
            continue
        if abs(w.rect.h - t.h) > DONOR_SCALE_TOLERANCE * t.h:
            continue
        # donor-sized paste anchored at the target must stay in-bounds
        if t.x + w.rect.w > image_w or t.y + w.rect.h > image_h:
            continue
        out.append(w)
    return out


def _mutate_digits(text: str, rng: np.random.Generator) -> str:
    """Length-preserving random digit substitution; guaranteed different."""
    chars = list(text)
    digit_positions = [i for i, c in enumerate(chars) if c.isdigit()]
    if digit_positions:
        k = int(rng.integers(1, len(digit_positions) + 1))
        picked = rng.choice(len(digit_positions), size=k, replace=False)
        for p in sorted(int(i) for i in picked):
            pos = digit_positions[p]
            old = chars[pos]
            choices = [d for d in string.digits if d != old]
            chars[pos] = choices[int(rng.integers(len(choices)))]
        return "".join(chars)
    # No digits to mutate: swap one character for a different alphanumeric.
    pos = int(rng.integers(len(chars)))
    alphabet = string.ascii_uppercase + string.digits
    choices = [c for c in alphabet if c != chars[pos]]
    chars[pos] = choices[int(rng.integers(len(choices)))]
    return "".join(chars)


def _centered_at(target: Region, s: StringImage, width: int, height: int) -> tuple[int, int]:
    x = target.x + (target.w - s.w) // 2
    y = target.y + (target.h - s.h) // 2
    x = max(0, min(x, width - s.w))
    y = max(0, min(y, height - s.h))
    return x, y


def _word_string_image(image: DocumentImage, word: WordBox) -> StringImage:
    return binarize_otsu(copy_region(image, word.rect))


def _render_replacement(
    image: DocumentImage,
    target_word: WordBox,
    text: str,
) -> StringImage:
    """String image for new text, style-matched to the word it replaces."""
    ink = _word_string_image(image, target_word)
    font = match_font_to_height(target_word.rect.h)
    patch = render_text(text, font, px_height=max(4, target_word.rect.h), color=ink.fg_color)
    rendered = binarize_otsu(patch)
    return StringImage(glyph_mask=rendered.glyph_mask, fg_color=ink.fg_color)


def apply_text_replacement(
    image: DocumentImage,
    annot: OcrAnnotation,
    family: MethodFamily,
    rng: np.random.Generator,
    policy: TargetPolicy = AnyWord(),
    inpaint: InpaintFn = _default_inpaint,
    render_string: Optional[Callable[[DocumentImage, WordBox, str], StringImage]] = None,
) -> ApplyResult:
    """Replace one word's text: donor paste, inpaint+render, or the mix."""
    seed = _word_seed(rng)
    word = select_target(annot, policy, rng, image=image)
    if not isinstance(word, WordBox):
        raise NoMatchingTarget("text replacement targets a word box, not a margin")
    target = word.rect
    case = CaseKey(EditPattern.TEXT_REPLACEMENT, family)

    if family is MethodFamily.COPY_MOVE:
        donors = _donor_candidates(annot, word, image.width, image.height)
        if not donors:
            raise NoDonorWord(f"no donor sized within 20% of {target.w}x{target.h}")
        donor = donors[int(rng.integers(len(donors)))]
        patch = copy_region(image, donor.rect)
        paste_region = Region(target.x, target.y, donor.rect.w, donor.rect.h)
        forged, mask = paste_patch(image, patch, paste_region, blend_radius=0)
        record = EditRecord(
            case=case, target_region=target, source_region=donor.rect, seed=seed,
            params={"word_text": word.text, "replacement_text": donor.text},
        )
        return _finish(image, forged, mask, record)

    # Both generative and mix first erase the word by inpainting.
    hole = BinaryMaskRegion.full(target)
    erased, removal_mask, info = inpaint(image, hole)

    if family is MethodFamily.GENERATIVE:
        replacement = _mutate_digits(word.text, rng)
        make_string = render_string if render_string is not None else _render_replacement
        s = make_string(image, word, replacement)
        at = _centered_at(target, s, image.width, image.height)
        forged, paste_mask = paste_string_image(erased, s, at)
        record = EditRecord(
            case=case, target_region=target, seed=seed,
            params={
                "word_text": word.text, "replacement_text": replacement,
                "paste_x": at[0], "paste_y": at[1],
                **{f"inpaint_{k}": v for k, v in info.items()},
            },
        )
    elif family is MethodFamily.MIX:
        donors = _donor_candidates(annot, word, image.width, image.height)
        if not donors:
            raise NoDonorWord(f"no donor sized within 20% of {target.w}x{target.h}")
        donor = donors[int(rng.integers(len(donors)))]
        s = _word_string_image(image, donor)
        at = _centered_at(target, s, image.width, image.height)
        forged, paste_mask = paste_string_image(erased, s, at)
        record = EditRecord(
            case=case, target_region=target, source_region=donor.rect, seed=seed,
            params={
                "word_text": word.text, "replacement_text": donor.text,
                "paste_x": at[0], "paste_y": at[1],
                **{f"inpaint_{k}": v for k, v in info.items()},
            },
        )
    else:
        raise ValueError(f"unsupported replacement family: {family}")

    # A glyph can restore a pixel the erase step had altered, so the stage
    # masks only bound the truth; the label is the end-to-end diff.
    del removal_mask, paste_mask
    mask = changed_pixels(image.pixels, forged.pixels)
    return _finish(image, forged, mask, record)


# --- text addition ---

def _addition_color(image: DocumentImage, annot: OcrAnnotation, rng: np.random.Generator) -> tuple[int, int, int]:
    """Ink color sampled from an existing word, or near-black fallback."""
    words = list(annot.words)
    order = rng.permutation(len(words)) if words else []
    for i in order:
        try:
            return _word_string_image(image, words[int(i)]).fg_color
        except DegenerateHistogram:
            continue
    return (32, 32, 32)


def apply_text_addition(
    image: DocumentImage,
    annot: OcrAnnotation,
    family: MethodFamily,
    rng: np.random.Generator,
    policy: TargetPolicy = AnyWord(),
    render_string: Optional[Callable[[DocumentImage, WordBox, str], StringImage]] = None,
) -> ApplyResult:
    """Stamp new text into an area where no text exists."""
    seed = _word_seed(rng)
    case = CaseKey(EditPattern.TEXT_ADDITION, family)

    if family is MethodFamily.COPY_MOVE:
        if not annot.words:
            raise NoDonorWord("text addition by copy-move needs a donor word")
        donor = annot.words[int(rng.integers(len(annot.words)))]
        s = _word_string_image(image, donor)
        source: Optional[Region] = donor.rect
        params = {"donor_text": donor.text}
    elif family is MethodFamily.GENERATIVE:
        digits = int(rng.integers(2, 6))
        text = "".join(str(int(d)) for d in rng.integers(0, 10, size=digits))
        if text[0] == "0":
            text = str(int(rng.integers(1, 10))) + text[1:]
        heights = [w.rect.h for w in annot.words]
        px_height = int(np.median(heights)) if heights else 16
        color = _addition_color(image, annot, rng)
        if render_string is not None:
            fake_word = WordBox(Region(0, 0, max(4, px_height * len(text)), max(4, px_height)), text)
            s = render_string(image, fake_word, text)
        else:
            font = match_font_to_height(px_height)
            s = binarize_otsu(render_text(text, font, px_height=max(4, px_height), color=color))
            s = StringImage(glyph_mask=s.glyph_mask, fg_color=color)
        source = None
        params = {"added_text": text}
    else:
        raise ValueError(f"text addition supports copy_move or generative, not {family}")

    # Placement: an adjacent-margin policy anchors next to a word; otherwise
    # any blank region large enough for the glyphs.
    from .corpus import AdjacentMargin  # local import to avoid cycle noise

    if isinstance(policy, AdjacentMargin):
        margin = select_target(annot, policy, rng, image=image)
        if not isinstance(margin, Region) or margin.w < s.w or margin.h < s.h:
            raise NoBlankRegion("adjacent margin too small for the string image")
        target = margin
        ox = int(rng.integers(target.w - s.w + 1))
        oy = int(rng.integers(target.h - s.h + 1))
        at = (target.x + ox, target.y + oy)
    else:
        spot = _pick_blank_source(image, annot, s.w, s.h, rng)
        target = spot
        at = (spot.x, spot.y)

    forged, mask = paste_string_image(image, s, at)
    record = EditRecord(
        case=case,
        target_region=Region(at[0], at[1], s.w, s.h),
        source_region=source,
        seed=seed,
        params={**params, "paste_x": at[0], "paste_y": at[1]},
    )
    return _finish(image, forged, mask, record)


# --- background addition ---

def apply_background_addition(
    image: DocumentImage,
    annot: OcrAnnotation,
    family: MethodFamily,
    rng: np.random.Generator,
    policy: TargetPolicy = AnyWord(),
    inpaint: InpaintFn = _default_inpaint,
    min_size: tuple[int, int] = DEFAULT_BLANK_MIN,
) -> ApplyResult:
    """Overwrite a blank area with pasted or regenerated background.

    Blank-onto-blank edits can change nothing; those draws are retried a
    few times before the sample is rejected as degenerate.
    """
    seed = _word_seed(rng)
    case = CaseKey(EditPattern.BACKGROUND_ADDITION, family)
    min_w, min_h = min_size
    last_error: Optional[Exception] = None

    for _ in range(BACKGROUND_RETRIES):
        try:
            if family is MethodFamily.COPY_MOVE:
                target = _pick_blank_source(image, annot, min_w, min_h, rng)
                source = _pick_blank_source(image, annot, min_w, min_h, rng, exclude=target)
                patch = copy_region(image, source)
                forged, mask = paste_patch(image, patch, target, blend_radius=0)
                record = EditRecord(
                    case=case, target_region=target, source_region=source, seed=seed,
                )
            elif family is MethodFamily.GENERATIVE:
                target = _pick_blank_source(image, annot, min_w, min_h, rng)
                hole = BinaryMaskRegion.full(target)
                forged, mask, info = inpaint(image, hole)
                record = EditRecord(
                    case=case, target_region=target, seed=seed,
                    params={f"inpaint_{k}": v for k, v in info.items()},
                )
            else:
                raise ValueError(
                    f"background addition supports copy_move or generative, not {family}"
                )
            return _finish(image, forged, mask, record, min_changed=BACKGROUND_MIN_CHANGED)
        except (DegenerateSample, NoBlankRegion) as e:
            last_error = e
            continue
    raise DegenerateSample(f"{case}: no visible change after {BACKGROUND_RETRIES} tries") from last_error


_APPLY = {
    EditPattern.TEXT_REMOVAL: apply_text_removal,
    EditPattern.TEXT_REPLACEMENT: apply_text_replacement,
    EditPattern.TEXT_ADDITION: apply_text_addition,
    EditPattern.BACKGROUND_ADDITION: apply_background_addition,
}


def apply_case(
    case: CaseKey,
    image: DocumentImage,
    annot: OcrAnnotation,
    rng: np.random.Generator,
    policy: TargetPolicy = AnyWord(),
    inpaint: InpaintFn = _default_inpaint,
    render_string=None,
) -> ApplyResult:
    """Dispatch one taxonomy cell to its pattern function."""
    fn = _APPLY[case.pattern]
    kwargs = {"policy": policy}
    if case.pattern in (EditPattern.TEXT_REMOVAL, EditPattern.BACKGROUND_ADDITION):
        kwargs["inpaint"] = inpaint
    if case.pattern is EditPattern.TEXT_REPLACEMENT:
        kwargs["inpaint"] = inpaint
        kwargs["render_string"] = render_string
    if case.pattern is EditPattern.TEXT_ADDITION:
        kwargs["render_string"] = render_string
    return fn(image, annot, case.method, rng, **kwargs)
