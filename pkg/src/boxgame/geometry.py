"""Axis-aligned bounding boxes, IoU, and overlap-based losses.

Boxes live in continuous image coordinates (x_min, y_min, x_max, y_max)
with area (x_max - x_min) * (y_max - y_min).  Degenerate boxes are
rejected at construction so IoU is total on its domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "BoundingBox",
    "LossSpec",
    "boxes_array",
    "iou",
    "iou_matrix",
    "overlap_loss",
    "thresholded_loss",
    "pair_loss",
    "loss_matrix",
    "loss_vector",
]


@dataclass(frozen=True)
class BoundingBox:
    """A rectangle with strictly positive area; class_id is optional."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    class_id: Optional[int] = None

    def __post_init__(self) -> None:
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(isinstance(c, (int, float)) and math.isfinite(c) for c in coords):
            raise ValueError(f"box coordinates must be finite numbers, got {coords}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"box must have positive area, got {coords}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    def coords(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class LossSpec:
    """Which pairwise box loss to use.

    kind "overlap" is 1 - IoU; kind "thresholded" is the binary loss that
    fires when IoU falls below alpha.
    """

    kind: str = "overlap"
    alpha: float = 0.5

    def __post_init__(self) -> None:
        if self.kind not in ("overlap", "thresholded"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "thresholded" and not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie strictly inside (0, 1), got {self.alpha}")

    def to_text(self) -> str:
        if self.kind == "overlap":
            return "overlap"
        return f"thresholded {self.alpha!r}"

    @classmethod
    def from_text(cls, text: str) -> "LossSpec":
        parts = text.split()
        if parts and parts[0] == "overlap" and len(parts) == 1:
            return cls(kind="overlap")
        if len(parts) == 2 and parts[0] == "thresholded":
            return cls(kind="thresholded", alpha=float(parts[1]))
        raise ValueError(f"cannot parse loss spec {text!r}")


def boxes_array(boxes: Sequence[BoundingBox]) -> np.ndarray:
    """Stack boxes into an (N, 4) float array in (x_min, y_min, x_max, y_max) order."""
    return np.array([b.coords() for b in boxes], dtype=float).reshape(len(boxes), 4)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between (N, 4) and (M, 4) coordinate arrays."""
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0.0, None)
    inter = wh[:, :, 0] * wh[:, :, 1]
    union = area_a[:, None] + area_b[None, :] - inter
    return inter / union


def overlap_loss(a: BoundingBox, b: BoundingBox) -> float:
    """Non-overlap loss 1 - IoU: 0 for identical boxes, 1 for disjoint ones."""
    return 1.0 - iou(a, b)


def thresholded_loss(a: BoundingBox, b: BoundingBox, alpha: float) -> float:
    """Binary loss: 1 when IoU(a, b) < alpha, else 0."""
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie strictly inside (0, 1), got {alpha}")
    return 1.0 if iou(a, b) < alpha else 0.0


def pair_loss(a: BoundingBox, b: BoundingBox, spec: LossSpec) -> float:
    if spec.kind == "overlap":
        return overlap_loss(a, b)
    return thresholded_loss(a, b, spec.alpha)


def loss_matrix(
    rows: Sequence[BoundingBox], cols: Sequence[BoundingBox], spec: LossSpec
) -> np.ndarray:
    """Pairwise loss matrix M[i, j] = loss(rows[i], cols[j]) per spec."""
    if len(rows) == 0 or len(cols) == 0:
        raise ValueError("loss_matrix requires nonempty box lists")
    m = iou_matrix(boxes_array(rows), boxes_array(cols))
    if spec.kind == "overlap":
        return 1.0 - m
    return (m < spec.alpha).astype(float)


def loss_vector(box: BoundingBox, others: np.ndarray, spec: LossSpec) -> np.ndarray:
    """Loss of one box against every row of an (M, 4) coordinate array."""
    m = iou_matrix(boxes_array([box]), others)[0]
    if spec.kind == "overlap":
        return 1.0 - m
    return (m < spec.alpha).astype(float)
