"""ccblock: VGG-16 + CCBlock chest X-ray classifier built on numpy.

A self-contained CNN library: tensor kernels (matmul, im2col/col2im),
hand-differentiated layers, the CCBlock architecture, CCW binary weight
archives, manifest-driven data ingestion, SGD-momentum training, and
confusion-matrix evaluation.
"""

from .model import (
    ModelSpec,
    build_head,
    build_model,
    count_params,
    summarize_csv,
    summarize_text,
)
from .training import TrainConfig, checkpoint, resume, train
from .weights import apply_weights, load_archive, save_archive

__version__ = "0.1.0"

__all__ = [
    "ModelSpec",
    "TrainConfig",
    "apply_weights",
    "build_head",
    "build_model",
    "checkpoint",
    "count_params",
    "load_archive",
    "resume",
    "save_archive",
    "summarize_csv",
    "summarize_text",
    "train",
    "__version__",
]
