"""Per-proposal feature vectors and the learned potential over them.

Two cheap deterministic extractors stand in for a heavyweight image
model: "geometry" describes each box relative to the image (D = 6) and
"histogram" is an L1-normalized grayscale intensity histogram over the
box crop.  Precomputed features can be ingested from CSV files.  Rows
are L2-normalized by default so the learned potential cannot be
dominated by raw feature magnitudes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import DataError
from .proposals import ProposalSet

__all__ = [
    "FeatureMatrix",
    "ExtractorSpec",
    "extract_features",
    "load_features",
    "write_features",
    "potentials",
    "normalize_rows",
]

GEOMETRY_DIM = 6


@dataclass(frozen=True)
class FeatureMatrix:
    """One feature row per proposal, aligned by index; gt_index marks
    the ground-truth proposal's row."""

    image_id: str
    rows: np.ndarray
    gt_index: int

    def __post_init__(self) -> None:
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[0] == 0 or rows.shape[1] == 0:
            raise DataError("feature matrix must be a nonempty 2-D array")
        if not np.all(np.isfinite(rows)):
            raise DataError(f"feature matrix for {self.image_id!r} has non-finite entries")
        if not (0 <= self.gt_index < rows.shape[0]):
            raise DataError(
                f"gt_index {self.gt_index} out of range for {rows.shape[0]} rows"
            )
        object.__setattr__(self, "rows", rows)

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def __len__(self) -> int:
        return self.rows.shape[0]


@dataclass(frozen=True)
class ExtractorSpec:
    """Which feature extractor to run; "file" defers to a CSV ingest."""

    kind: str = "geometry"
    bins: int = 16
    path: Optional[str] = None
    normalize: bool = True

    def __post_init__(self) -> None:
        if self.kind not in ("geometry", "histogram", "file"):
            raise DataError(f"unknown extractor kind {self.kind!r}")
        if self.kind == "histogram" and self.bins < 2:
            raise DataError("histogram extractor needs at least 2 bins")

    def to_text(self) -> str:
        if self.kind == "histogram":
            base = f"histogram {self.bins}"
        elif self.kind == "file":
            base = "file"
        else:
            base = "geometry"
        return base if self.normalize else base + " raw"

    @classmethod
    def from_text(cls, text: str) -> "ExtractorSpec":
        parts = text.split()
        normalize = True
        if parts and parts[-1] == "raw":
            normalize = False
            parts = parts[:-1]
        if parts == ["geometry"]:
            return cls(kind="geometry", normalize=normalize)
        if parts == ["file"]:
            return cls(kind="file", normalize=normalize)
        if len(parts) == 2 and parts[0] == "histogram":
            return cls(kind="histogram", bins=int(parts[1]), normalize=normalize)
        raise DataError(f"cannot parse extractor spec {text!r}")


def _grayscale(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=float)
    if image.ndim == 3:
        return image.mean(axis=2)
    if image.ndim == 2:
        return image
    raise DataError("image must be an (H, W) or (H, W, C) pixel grid")


def extract_features(
    image: np.ndarray, proposals: ProposalSet, spec: ExtractorSpec
) -> FeatureMatrix:
    """Deterministic features for every proposal of one image.

    geometry: normalized center (2), normalized width/height (2), log of
    the normalized aspect ratio (1), area fraction (1).
    histogram: L1-normalized grayscale histogram of the box crop with
    spec.bins bins over intensity [0, 255].
    """
    if spec.kind == "file":
        raise DataError("extractor kind 'file' must go through load_features")
    gray = _grayscale(image)
    height, width = gray.shape
    if height == 0 or width == 0:
        raise DataError("image is empty")
    out = np.empty((len(proposals), spec.bins if spec.kind == "histogram" else GEOMETRY_DIM))
    for i, box in enumerate(proposals.boxes):
        if box.x_min < -1e-9 or box.y_min < -1e-9 or box.x_max > width + 1e-9 or box.y_max > height + 1e-9:
            raise DataError(
                f"box {box.coords()} lies outside the {width}x{height} image"
            )
        if spec.kind == "geometry":
            cx, cy = box.center
            w_n = box.width / width
            h_n = box.height / height
            out[i] = (
                cx / width,
                cy / height,
                w_n,
                h_n,
                np.log(w_n / h_n),
                w_n * h_n,
            )
        else:
            x0 = max(int(np.floor(box.x_min)), 0)
            x1 = min(max(int(np.ceil(box.x_max)), x0 + 1), width)
            y0 = max(int(np.floor(box.y_min)), 0)
            y1 = min(max(int(np.ceil(box.y_max)), y0 + 1), height)
            crop = gray[y0:y1, x0:x1]
            hist, _ = np.histogram(crop, bins=spec.bins, range=(0.0, 255.0))
            total = hist.sum()
            out[i] = hist / total if total > 0 else 0.0
    fm = FeatureMatrix(image_id=proposals.image_id, rows=out, gt_index=0)
    return normalize_rows(fm) if spec.normalize else fm


def load_features(path: Union[str, Path], proposals: ProposalSet) -> FeatureMatrix:
    """Ingest a feature CSV (`dim=<D>` header then one row per proposal,
    in proposal-file order)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"feature file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    body = [(n, ln.strip()) for n, ln in enumerate(lines, start=1) if ln.strip()]
    if not body:
        raise DataError(f"{path}: empty feature file")
    header_no, header = body[0]
    if not header.startswith("dim="):
        raise DataError(f"{path}:{header_no}: expected header 'dim=<D>'")
    try:
        dim = int(header[len("dim="):])
    except ValueError:
        raise DataError(f"{path}:{header_no}: malformed dimension header") from None
    if dim < 1:
        raise DataError(f"{path}:{header_no}: dimension must be positive")
    rows = []
    for lineno, line in body[1:]:
        parts = line.split(",")
        if len(parts) != dim:
            raise DataError(
                f"{path}:{lineno}: expected {dim} values, found {len(parts)}"
            )
        vals = []
        for col, part in enumerate(parts, start=1):
            try:
                v = float(part)
            except ValueError:
                raise DataError(f"{path}:{lineno}: column {col}: malformed number") from None
            if not np.isfinite(v):
                raise DataError(f"{path}:{lineno}: column {col}: non-finite value")
            vals.append(v)
        rows.append(vals)
    if len(rows) != len(proposals):
        raise DataError(
            f"{path}: {len(rows)} feature rows for {len(proposals)} proposals"
        )
    return FeatureMatrix(
        image_id=proposals.image_id, rows=np.array(rows, dtype=float), gt_index=0
    )


def write_features(features: FeatureMatrix, path: Union[str, Path]) -> None:
    lines = [f"dim={features.dim}"]
    for row in features.rows:
        lines.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def potentials(theta: np.ndarray, features: FeatureMatrix) -> np.ndarray:
    """psi[i] = theta @ (rows[i] - rows[gt_index]); exactly 0 at the
    ground-truth row."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (features.dim,):
        raise DataError(
            f"theta dimension {theta.shape} does not match feature dim {features.dim}"
        )
    psi = (features.rows - features.rows[features.gt_index]) @ theta
    psi[features.gt_index] = 0.0
    return psi


def normalize_rows(features: FeatureMatrix) -> FeatureMatrix:
    """Scale every nonzero row to unit Euclidean norm; zero rows stay."""
    norms = np.linalg.norm(features.rows, axis=1, keepdims=True)
    safe = np.where(norms > 0.0, norms, 1.0)
    return FeatureMatrix(
        image_id=features.image_id,
        rows=features.rows / safe,
        gt_index=features.gt_index,
    )
