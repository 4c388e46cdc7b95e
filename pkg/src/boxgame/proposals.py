"""Candidate-box generation: the discretized label space for one image.

Grid and jitter generators are deterministic stand-ins for an external
proposal algorithm; real proposals can be ingested from text files.
Exact duplicate boxes are dropped everywhere because duplicate
strategies only degenerate the game.
"""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import DataError
from .geometry import BoundingBox, boxes_array, iou

__all__ = [
    "ProposalSet",
    "ProposalConfig",
    "grid_proposals",
    "jitter_proposals",
    "load_proposals",
    "write_proposals",
    "filter_by_iou",
    "ensure_ground_truth",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProposalSet:
    """Ordered candidate boxes for one image, optionally scored."""

    boxes: tuple[BoundingBox, ...]
    image_id: str = ""
    scores: Optional[tuple[float, ...]] = None

    def __post_init__(self) -> None:
        if len(self.boxes) == 0:
            raise DataError(f"empty label space for image {self.image_id!r}")
        seen = set()
        for b in self.boxes:
            if b.coords() in seen:
                raise DataError(
                    f"duplicate box {b.coords()} in proposal set {self.image_id!r}"
                )
            seen.add(b.coords())
        if self.scores is not None:
            if len(self.scores) != len(self.boxes):
                raise DataError("scores must align one-to-one with boxes")
            if any(s < 0 for s in self.scores):
                raise DataError("proposal scores must be nonnegative")

    def __len__(self) -> int:
        return len(self.boxes)

    def as_array(self) -> np.ndarray:
        return boxes_array(self.boxes)

    def index_of(self, box: BoundingBox) -> Optional[int]:
        """Index of the box with exactly these coordinates, if present."""
        target = box.coords()
        for i, b in enumerate(self.boxes):
            if b.coords() == target:
                return i
        return None


@dataclass(frozen=True)
class ProposalConfig:
    """How to produce the label space for an image.

    generator "grid" slides windows of each (width, height) scale at the
    paired stride; "jitter" perturbs the ground-truth box; "file" reads
    proposals from the path recorded in the manifest.
    """

    generator: str = "grid"
    k: int = 250
    grid_scales: tuple[tuple[float, float], ...] = ((16.0, 16.0), (32.0, 32.0))
    grid_strides: tuple[float, ...] = (8.0, 16.0)
    jitter_count: int = 30
    jitter_translate: float = 6.0
    jitter_scale: float = 0.2
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.generator not in ("grid", "jitter", "file"):
            raise DataError(f"unknown proposal generator {self.generator!r}")
        if self.k < 1:
            raise DataError("proposal cap k must be >= 1")
        if len(self.grid_scales) != len(self.grid_strides):
            raise DataError("grid_scales and grid_strides must align")
        if any(w <= 0 or h <= 0 for w, h in self.grid_scales):
            raise DataError("grid scales must be positive")
        if any(s <= 0 for s in self.grid_strides):
            raise DataError("grid strides must be positive")
        if self.jitter_count < 1:
            raise DataError("jitter sample count must be >= 1")
        if self.jitter_translate < 0:
            raise DataError("jitter translation range must be nonnegative")
        if not (0.0 <= self.jitter_scale < 1.0):
            raise DataError("jitter scale range must lie in [0, 1)")


def _dedupe(boxes: Sequence[BoundingBox], scores: Optional[Sequence[float]] = None):
    kept = []
    kept_scores = []
    seen = set()
    dropped = 0
    for i, b in enumerate(boxes):
        if b.coords() in seen:
            dropped += 1
            continue
        seen.add(b.coords())
        kept.append(b)
        if scores is not None:
            kept_scores.append(scores[i])
    return kept, (kept_scores if scores is not None else None), dropped


def grid_proposals(
    image_width: float, image_height: float, config: ProposalConfig, image_id: str = ""
) -> ProposalSet:
    """Multi-scale sliding-window boxes clipped to the image, row-major
    by (scale, y, x), deduplicated and truncated to k."""
    if image_width <= 0 or image_height <= 0:
        raise DataError("image dimensions must be positive")
    boxes: list[BoundingBox] = []
    for (w, h), stride in zip(config.grid_scales, config.grid_strides):
        y = 0.0
        while y < image_height:
            x = 0.0
            while x < image_width:
                x1 = min(x + w, float(image_width))
                y1 = min(y + h, float(image_height))
                if x1 > x and y1 > y:
                    boxes.append(BoundingBox(x, y, x1, y1))
                x += stride
            y += stride
    kept, _, _ = _dedupe(boxes)
    if not kept:
        raise DataError("empty label space: grid configuration yields no boxes")
    return ProposalSet(boxes=tuple(kept[: config.k]), image_id=image_id)


def jitter_proposals(
    gt: BoundingBox,
    config: ProposalConfig,
    image_id: str = "",
    bounds: Optional[tuple[float, float]] = None,
) -> ProposalSet:
    """Seeded uniform translation/scale perturbations of the ground
    truth; element 0 is always the ground truth itself.  When bounds
    (width, height) are given, samples are clipped into the image."""
    rng = np.random.default_rng(_derive_seed(config.rng_seed, image_id))
    boxes = [gt]
    cx, cy = gt.center
    for _ in range(config.jitter_count):
        dx, dy = rng.uniform(-config.jitter_translate, config.jitter_translate, size=2)
        sx, sy = rng.uniform(1.0 - config.jitter_scale, 1.0 + config.jitter_scale, size=2)
        half_w = 0.5 * gt.width * sx
        half_h = 0.5 * gt.height * sy
        x0, x1 = cx + dx - half_w, cx + dx + half_w
        y0, y1 = cy + dy - half_h, cy + dy + half_h
        if bounds is not None:
            x0, x1 = max(0.0, x0), min(float(bounds[0]), x1)
            y0, y1 = max(0.0, y0), min(float(bounds[1]), y1)
        if x1 > x0 and y1 > y0:
            boxes.append(BoundingBox(x0, y0, x1, y1))
    kept, _, _ = _dedupe(boxes)
    return ProposalSet(boxes=tuple(kept[: max(config.k, 1)]), image_id=image_id)


def _derive_seed(seed: int, image_id: str) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=[seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(image_id.encode())])


def load_proposals(path: Union[str, Path], image_id: str = "") -> ProposalSet:
    """Read a proposal file: one `x_min,y_min,x_max,y_max[,score]` per
    line, `#` comments allowed.  File order is preserved; exact
    duplicates are dropped (count logged)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"proposal file not found: {path}")
    boxes: list[BoundingBox] = []
    scores: list[float] = []
    saw_score = None
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (4, 5):
            raise DataError(f"{path}:{lineno}: expected 4 or 5 comma-separated values")
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise DataError(f"{path}:{lineno}: malformed number") from None
        has_score = len(vals) == 5
        if saw_score is None:
            saw_score = has_score
        elif saw_score != has_score:
            raise DataError(f"{path}:{lineno}: mixed scored and unscored rows")
        try:
            boxes.append(BoundingBox(*vals[:4]))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        if has_score:
            if vals[4] < 0:
                raise DataError(f"{path}:{lineno}: negative score")
            scores.append(vals[4])
    if not boxes:
        raise DataError(f"{path}: no proposals found")
    kept, kept_scores, dropped = _dedupe(boxes, scores if saw_score else None)
    if dropped:
        log.warning("%s: dropped %d duplicate proposal(s)", path, dropped)
    return ProposalSet(
        boxes=tuple(kept),
        image_id=image_id or path.stem,
        scores=tuple(kept_scores) if kept_scores is not None else None,
    )


def write_proposals(proposals: ProposalSet, path: Union[str, Path]) -> None:
    lines = []
    for i, b in enumerate(proposals.boxes):
        cells = [repr(float(c)) for c in b.coords()]
        if proposals.scores is not None:
            cells.append(repr(float(proposals.scores[i])))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def filter_by_iou(
    proposals: ProposalSet, gt: BoundingBox, threshold: float
) -> ProposalSet:
    """Subsequence of proposals with IoU(box, gt) strictly above the
    threshold.  The result may legitimately be empty; the caller
    decides the fallback."""
    keep = [i for i, b in enumerate(proposals.boxes) if iou(b, gt) > threshold]
    return _subset(proposals, keep)


def _subset(proposals: ProposalSet, keep: Sequence[int]) -> ProposalSet:
    # Bypasses validation: a subset cannot introduce duplicates, and
    # emptiness is explicitly legal for filter results.
    boxes = tuple(proposals.boxes[i] for i in keep)
    scores = (
        tuple(proposals.scores[i] for i in keep) if proposals.scores is not None else None
    )
    out = object.__new__(ProposalSet)
    object.__setattr__(out, "boxes", boxes)
    object.__setattr__(out, "image_id", proposals.image_id)
    object.__setattr__(out, "scores", scores)
    return out


def ensure_ground_truth(
    proposals: ProposalSet, gt: BoundingBox
) -> tuple[ProposalSet, int, bool]:
    """Return (proposals, gt index, appended?) with the ground truth
    guaranteed present; it is appended when missing so a zero-loss
    strategy always exists during training."""
    found = proposals.index_of(gt)
    if found is not None:
        return proposals, found, False
    boxes = proposals.boxes + (gt,)
    scores = proposals.scores + (1.0,) if proposals.scores is not None else None
    return (
        ProposalSet(boxes=boxes, image_id=proposals.image_id, scores=scores),
        len(boxes) - 1,
        True,
    )
