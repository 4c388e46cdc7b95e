"""Dataset manifests: one text block per image, plus corpus metadata.

A manifest entry points at either a pixmap (features are computed) or a
precomputed feature file (proposals file required for row alignment),
and carries the annotated ground-truth box.  Paths are stored relative
to the manifest's directory.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Union

from .errors import DataError
from .features import ExtractorSpec, extract_features, load_features, normalize_rows
from .geometry import BoundingBox
from .learning import Dataset, Example
from .pixmap import read_ppm
from .proposals import (
    ProposalConfig,
    ensure_ground_truth,
    grid_proposals,
    jitter_proposals,
    load_proposals,
)

__all__ = [
    "ManifestEntry",
    "Manifest",
    "load_manifest",
    "save_manifest",
    "build_dataset",
    "build_examples",
]

MANIFEST_TAG = "boxgame-manifest v1"


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    class_id: int
    gt: BoundingBox
    image_path: Optional[str] = None
    features_path: Optional[str] = None
    proposals_path: Optional[str] = None

    def __post_init__(self) -> None:
        if (self.image_path is None) == (self.features_path is None):
            raise DataError(
                f"entry {self.image_id!r} must have exactly one of image/features"
            )
        if self.features_path is not None and self.proposals_path is None:
            raise DataError(
                f"entry {self.image_id!r}: feature files need a proposals file "
                "for row alignment"
            )


@dataclass(frozen=True)
class Manifest:
    entries: tuple[ManifestEntry, ...]
    metadata: dict[str, str]
    base_dir: Path

    def __post_init__(self) -> None:
        if not self.entries:
            raise DataError("manifest lists no images")
        ids = [e.image_id for e in self.entries]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DataError(f"duplicate image ids in manifest: {dupes}")

    def resolve(self, rel: str) -> Path:
        return self.base_dir / rel

    def __len__(self) -> int:
        return len(self.entries)


def _parse_box(text: str) -> BoundingBox:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 4:
        raise DataError(f"ground-truth box needs 4 coordinates, got {text!r}")
    return BoundingBox(*(float(p) for p in parts))


def load_manifest(path: Union[str, Path]) -> Manifest:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != MANIFEST_TAG:
        raise DataError(f"{path}: missing manifest version tag {MANIFEST_TAG!r}")
    metadata: dict[str, str] = {}
    blocks: list[dict[str, str]] = []
    current: Optional[dict[str, str]] = None
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == "[image]":
            current = {}
            blocks.append(current)
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if current is None:
            metadata[key] = value
        else:
            if key in current:
                raise DataError(f"{path}:{lineno}: duplicate key {key!r} in block")
            current[key] = value
    entries = []
    for block in blocks:
        missing = {"id", "class", "gt"} - set(block)
        if missing:
            raise DataError(f"{path}: image block missing keys {sorted(missing)}")
        entries.append(
            ManifestEntry(
                image_id=block["id"],
                class_id=int(block["class"]),
                gt=_parse_box(block["gt"]),
                image_path=block.get("image"),
                features_path=block.get("features"),
                proposals_path=block.get("proposals"),
            )
        )
    manifest = Manifest(entries=tuple(entries), metadata=metadata, base_dir=path.parent)
    for entry in manifest.entries:
        for rel in (entry.image_path, entry.features_path, entry.proposals_path):
            if rel is not None and not manifest.resolve(rel).exists():
                raise DataError(f"{path}: referenced file missing: {rel}")
    return manifest


def save_manifest(manifest: Manifest, path: Union[str, Path]) -> None:
    lines = [MANIFEST_TAG]
    for key, value in manifest.metadata.items():
        lines.append(f"{key} = {value}")
    for entry in manifest.entries:
        lines.append("")
        lines.append("[image]")
        lines.append(f"id = {entry.image_id}")
        lines.append(f"class = {entry.class_id}")
        if entry.image_path is not None:
            lines.append(f"image = {entry.image_path}")
        if entry.features_path is not None:
            lines.append(f"features = {entry.features_path}")
        if entry.proposals_path is not None:
            lines.append(f"proposals = {entry.proposals_path}")
        coords = ",".join(repr(float(c)) for c in entry.gt.coords())
        lines.append(f"gt = {coords}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _materialize(
    manifest: Manifest,
    entry: ManifestEntry,
    proposal_config: ProposalConfig,
    extractor: ExtractorSpec,
    training: bool,
) -> Example:
    if entry.features_path is not None:
        proposals = load_proposals(
            manifest.resolve(entry.proposals_path), image_id=entry.image_id
        )
        gt_index = proposals.index_of(entry.gt)
        if training and gt_index is None:
            raise DataError(
                f"{entry.image_id}: ground truth missing from the proposal file; "
                "precomputed features cannot be synthesized for it"
            )
        features = load_features(manifest.resolve(entry.features_path), proposals)
        if extractor.normalize:
            features = normalize_rows(features)
        features = replace(features, gt_index=gt_index if gt_index is not None else 0)
        return Example(
            image_id=entry.image_id,
            class_id=entry.class_id,
            gt=entry.gt,
            proposals=proposals,
            features=features,
        )

    image = read_ppm(manifest.resolve(entry.image_path))
    height, width = image.shape[:2]
    if entry.proposals_path is not None:
        proposals = load_proposals(
            manifest.resolve(entry.proposals_path), image_id=entry.image_id
        )
    elif proposal_config.generator == "grid":
        proposals = grid_proposals(width, height, proposal_config, image_id=entry.image_id)
    elif proposal_config.generator == "jitter":
        proposals = jitter_proposals(
            entry.gt, proposal_config, image_id=entry.image_id, bounds=(width, height)
        )
    else:
        raise DataError(
            f"{entry.image_id}: proposal generator 'file' needs a proposals path"
        )
    gt_index = 0
    if training:
        proposals, gt_index, _ = ensure_ground_truth(proposals, entry.gt)
    else:
        found = proposals.index_of(entry.gt)
        gt_index = found if found is not None else 0
    features = extract_features(image, proposals, extractor)
    features = replace(features, gt_index=gt_index)
    return Example(
        image_id=entry.image_id,
        class_id=entry.class_id,
        gt=entry.gt,
        proposals=proposals,
        features=features,
    )


def _select_entries(manifest: Manifest, class_id: Optional[int]):
    entries = manifest.entries
    if class_id is not None:
        entries = tuple(e for e in entries if e.class_id == class_id)
        if not entries:
            raise DataError(f"manifest has no entries with class_id {class_id}")
    return entries


def build_dataset(
    manifest: Manifest,
    proposal_config: ProposalConfig,
    extractor: ExtractorSpec,
    class_id: Optional[int] = None,
) -> Dataset:
    """Materialize a training dataset; every ground truth is
    force-included in its proposal set."""
    examples = tuple(
        _materialize(manifest, e, proposal_config, extractor, training=True)
        for e in _select_entries(manifest, class_id)
    )
    return Dataset(examples=examples)


def build_examples(
    manifest: Manifest,
    proposal_config: ProposalConfig,
    extractor: ExtractorSpec,
    class_id: Optional[int] = None,
) -> tuple[Example, ...]:
    """Materialize evaluation examples; proposal sets are left as the
    generator or file produced them (no ground-truth leak)."""
    return tuple(
        _materialize(manifest, e, proposal_config, extractor, training=False)
        for e in _select_entries(manifest, class_id)
    )
