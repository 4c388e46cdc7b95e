"""Seeded synthetic corpora: one bright shape per image on a textured
background, with the exact shape bounds as ground truth.

Each class id maps to a (shape, color family) pair so per-class models
have something to tell apart.  Annotation noise jitters the recorded
ground truth around the true bounds to emulate annotator disagreement;
the drawn shape itself is unaffected.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import DataError
from .geometry import BoundingBox
from .manifest import Manifest, ManifestEntry, save_manifest
from .pixmap import write_ppm

__all__ = ["CorpusConfig", "generate_corpus", "CLASS_FAMILIES"]

# (shape, base RGB); colors are bright so box crops separate from the
# darker textured background in grayscale.
CLASS_FAMILIES = (
    ("rectangle", (235, 90, 60)),
    ("ellipse", (90, 225, 90)),
    ("triangle", (110, 160, 245)),
    ("diamond", (240, 220, 70)),
)


@dataclass(frozen=True)
class CorpusConfig:
    n_images: int = 50
    n_classes: int = 2
    image_width: int = 64
    image_height: int = 64
    seed: int = 7
    noise_px: float = 0.0
    noise_frac: float = 0.0
    min_shape: float = 18.0
    max_shape: float = 40.0

    def __post_init__(self) -> None:
        if self.n_images < 1:
            raise DataError("corpus needs at least one image")
        if not (1 <= self.n_classes <= len(CLASS_FAMILIES)):
            raise DataError(f"n_classes must lie in 1..{len(CLASS_FAMILIES)}")
        if self.image_width < 8 or self.image_height < 8:
            raise DataError("images must be at least 8x8")
        if self.noise_px < 0 or self.noise_frac < 0:
            raise DataError("annotation noise ranges must be nonnegative")
        if not (2.0 <= self.min_shape <= self.max_shape):
            raise DataError("shape size range must satisfy 2 <= min <= max")
        if self.max_shape > min(self.image_width, self.image_height):
            raise DataError("max shape size exceeds the image")


def _shape_mask(kind: str, xs: np.ndarray, ys: np.ndarray, box: BoundingBox) -> np.ndarray:
    cx, cy = box.center
    half_w = box.width / 2.0
    half_h = box.height / 2.0
    if kind == "rectangle":
        return (
            (xs >= box.x_min) & (xs <= box.x_max) & (ys >= box.y_min) & (ys <= box.y_max)
        )
    if kind == "ellipse":
        return ((xs - cx) / half_w) ** 2 + ((ys - cy) / half_h) ** 2 <= 1.0
    if kind == "triangle":
        # Apex on the top edge midline, base along the bottom edge.
        inside_y = (ys >= box.y_min) & (ys <= box.y_max)
        t = np.clip((ys - box.y_min) / box.height, 0.0, 1.0)
        return inside_y & (np.abs(xs - cx) <= t * half_w)
    if kind == "diamond":
        return np.abs(xs - cx) / half_w + np.abs(ys - cy) / half_h <= 1.0
    raise DataError(f"unknown shape kind {kind!r}")


def _render(config: CorpusConfig, rng: np.random.Generator, class_id: int):
    width, height = config.image_width, config.image_height
    kind, base_color = CLASS_FAMILIES[class_id]

    # Textured background: dark gray noise field.
    background = rng.integers(35, 95, size=(height, width, 1), dtype=np.int16)
    image = np.repeat(background, 3, axis=2)
    image += rng.integers(-12, 13, size=(height, width, 3), dtype=np.int16)

    w = rng.uniform(config.min_shape, config.max_shape)
    h = rng.uniform(config.min_shape, config.max_shape)
    x0 = rng.uniform(0.0, width - w)
    y0 = rng.uniform(0.0, height - h)
    bounds = BoundingBox(x0, y0, x0 + w, y0 + h)

    ys, xs = np.mgrid[0:height, 0:width]
    mask = _shape_mask(kind, xs + 0.5, ys + 0.5, bounds)
    color = np.array(base_color, dtype=float) + rng.uniform(-25, 25, size=3)
    shade = rng.uniform(0.85, 1.0)
    image[mask] = np.clip(color * shade, 0, 255).astype(np.int16)

    return np.clip(image, 0, 255).astype(np.uint8), bounds


def _jitter_annotation(
    bounds: BoundingBox, config: CorpusConfig, rng: np.random.Generator,
) -> BoundingBox:
    ax = config.noise_px + config.noise_frac * bounds.width
    ay = config.noise_px + config.noise_frac * bounds.height
    offsets = rng.uniform(-1.0, 1.0, size=4) * np.array([ax, ay, ax, ay])
    x0, y0 = bounds.x_min + offsets[0], bounds.y_min + offsets[1]
    x1, y1 = bounds.x_max + offsets[2], bounds.y_max + offsets[3]
    x0 = min(max(x0, 0.0), config.image_width - 1.0)
    y0 = min(max(y0, 0.0), config.image_height - 1.0)
    x1 = min(max(x1, x0 + 1.0), float(config.image_width))
    y1 = min(max(y1, y0 + 1.0), float(config.image_height))
    return BoundingBox(x0, y0, x1, y1)


def generate_corpus(config: CorpusConfig, out_dir: Union[str, Path]) -> Manifest:
    """Write images/ and manifest.txt under out_dir; returns the manifest."""
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    try:
        images_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create corpus directory {out_dir}: {exc}") from exc

    children = np.random.SeedSequence(config.seed).spawn(config.n_images)
    entries = []
    for idx in range(config.n_images):
        rng = np.random.default_rng(children[idx])
        class_id = idx % config.n_classes
        image, bounds = _render(config, rng, class_id)
        annotation = (
            _jitter_annotation(bounds, config, rng)
            if (config.noise_px > 0 or config.noise_frac > 0)
            else bounds
        )
        image_id = f"img_{idx:04d}"
        rel = f"images/{image_id}.ppm"
        write_ppm(image, out_dir / rel)
        entries.append(
            ManifestEntry(
                image_id=image_id,
                class_id=class_id,
                gt=annotation,
                image_path=rel,
            )
        )
    metadata = {
        "generator": "synthetic",
        "seed": str(config.seed),
        "n_images": str(config.n_images),
        "n_classes": str(config.n_classes),
        "image_size": f"{config.image_width}x{config.image_height}",
        "noise_px": repr(float(config.noise_px)),
        "noise_frac": repr(float(config.noise_frac)),
    }
    manifest = Manifest(entries=tuple(entries), metadata=metadata, base_dir=out_dir)
    save_manifest(manifest, out_dir / "manifest.txt")
    return manifest
