"""Forged-document synthesis and forgery-localization evaluation toolkit."""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    AdjacentMargin,
    AnyWord,
    DocumentImage,
    OcrAnnotation,
    Region,
    TaggedWord,
    WordBox,
    find_blank_regions,
    load_corpus,
    parse_annotations,
    select_target,
)
from .editops import (  # noqa: F401
    BinaryMaskRegion,
    Patch,
    StringImage,
    binarize_otsu,
    changed_pixels,
    copy_region,
    inpaint_diffusion,
    otsu_threshold,
    paste_patch,
    paste_string_image,
    render_text,
)
from .patterns import (  # noqa: F401
    CaseKey,
    EditPattern,
    EditRecord,
    ForgeryMask,
    MethodFamily,
    apply_background_addition,
    apply_case,
    apply_text_addition,
    apply_text_removal,
    apply_text_replacement,
)
