"""Zero-sum game training and adversarial annotation augmentation for
bounding-box localization."""

from .geometry import BoundingBox, LossSpec, iou, loss_matrix, overlap_loss, thresholded_loss

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "LossSpec",
    "iou",
    "overlap_loss",
    "thresholded_loss",
    "loss_matrix",
    "__version__",
]
