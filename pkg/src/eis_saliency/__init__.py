"""Saliency detection that fuses an internal superpixel-labeling map with an
external map learned from retrieved annotated images."""
from .config import PipelineConfig, load_config
from .evaluation import f_measure, pr_curve, auc
from .fusion import fuse
from .imaging import ValidationError, load_dataset, normalize_map
from .internal import internal_map
from .pipeline import Detection, detect

__all__ = [
    "Detection", "PipelineConfig", "ValidationError", "auc", "detect", "f_measure", "fuse",
    "internal_map", "load_config", "load_dataset", "normalize_map", "pr_curve",
]
__version__ = "0.1.0"
