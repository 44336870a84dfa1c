"""forgedet: toy forgery-localization trainer.

Contrastive pre-training of a small convolutional encoder on unlabeled
document images, supervised fine-tuning of a per-pixel two-class
segmentation head on a generated forgery dataset, and batch inference
that writes score-ready {0, 255} mask PNGs. All coupling to the dataset
generator goes through its published files: manifest.jsonl, image and
mask PNGs, and the mirrored prediction layout.
"""

from .configs import FinetuneConfig, PretrainConfig
from .errors import (
    DetectorError,
    EmptyTrainSplit,
    InsufficientData,
    ManifestFormatError,
    MissingCheckpoint,
)
from .finetune import FinetuneResult, finetune
from .losses import nt_xent, segmentation_loss
from .models import Encoder, ProjectionHead, SegmentationModel
from .predict import PredictResult, predict, predict_image
from .pretrain import PretrainResult, pretrain

__version__ = "0.1.0"

__all__ = [
    "DetectorError",
    "EmptyTrainSplit",
    "Encoder",
    "FinetuneConfig",
    "FinetuneResult",
    "InsufficientData",
    "ManifestFormatError",
    "MissingCheckpoint",
    "PredictResult",
    "PretrainConfig",
    "PretrainResult",
    "ProjectionHead",
    "SegmentationModel",
    "__version__",
    "finetune",
    "nt_xent",
    "predict",
    "predict_image",
    "pretrain",
    "segmentation_loss",
]
