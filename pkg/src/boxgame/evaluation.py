"""Test-time inference, metrics, and augmentation export.

The adversarial predictor replays the training-time equilibrium
computation on the test image and answers with the most probable
predictor strategy.  At test time the ground-truth feature row is
unknown, so the potential is the raw theta . phi(y); that differs from
the training potential only by a per-image constant, which shifts the
game value but leaves the equilibrium pair untouched.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .errors import DataError, SolverError
from .game import double_oracle
from .geometry import BoundingBox, iou, loss_matrix
from .learning import Dataset, Example, ThetaModel

__all__ = [
    "PredictionRecord",
    "AugmentationRecord",
    "predict_ada",
    "predict_ssvm",
    "predict_softmax",
    "predict_with_model",
    "predict_multiclass",
    "accuracy_at_iou",
    "mean_ap",
    "detection_accuracy",
    "export_augmentation",
    "write_predictions",
    "read_predictions",
    "write_augmentation",
    "read_augmentation",
]


@dataclass(frozen=True)
class PredictionRecord:
    image_id: str
    box: BoundingBox
    class_id: int
    method: str
    score: float = 0.0
    distribution: Optional[np.ndarray] = None
    adversary: Optional[np.ndarray] = None


@dataclass(frozen=True)
class AugmentationRecord:
    """The equilibrium annotation distribution restricted to its support."""

    image_id: str
    pairs: tuple[tuple[BoundingBox, float], ...]

    def __post_init__(self) -> None:
        if not self.pairs:
            raise DataError(f"augmentation record for {self.image_id!r} is empty")
        weights = np.array([w for _, w in self.pairs])
        if np.any(weights <= 0):
            raise DataError("augmentation weights must be positive")
        if abs(float(weights.sum()) - 1.0) > 1e-6:
            raise DataError(
                f"augmentation weights for {self.image_id!r} sum to {weights.sum()!r}"
            )


def _test_time_psi(model: ThetaModel, example: Example) -> np.ndarray:
    if model.dim != example.features.dim:
        raise DataError(
            f"model dimension {model.dim} does not match feature dimension "
            f"{example.features.dim} on image {example.image_id!r}"
        )
    return example.features.rows @ model.theta


def predict_ada(
    model: ThetaModel,
    example: Example,
    oracle_eps: float = 1e-6,
    train_time: bool = False,
) -> PredictionRecord:
    """Equilibrium inference: solve the game on the test image's
    proposals and answer the highest-probability predictor strategy
    (ties to the lowest index).  train_time subtracts the ground-truth
    feature row from the potential, reproducing the training game."""
    if model.objective_kind != "ada":
        raise DataError(f"predict_ada needs an ada model, got {model.objective_kind!r}")
    psi = _test_time_psi(model, example)
    if train_time:
        psi = psi - psi[example.features.gt_index]
        psi[example.features.gt_index] = 0.0
    losses = loss_matrix(example.proposals.boxes, example.proposals.boxes, model.loss)
    try:
        eq = double_oracle(lambda i: losses[i], psi, eps=oracle_eps)
    except SolverError as exc:
        raise SolverError(f"inference failed on image {example.image_id!r}: {exc}") from exc
    choice = int(np.argmax(eq.f))
    return PredictionRecord(
        image_id=example.image_id,
        box=example.proposals.boxes[choice],
        class_id=example.class_id,
        method="ada",
        score=-eq.value,
        distribution=eq.f,
        adversary=eq.p,
    )


def predict_ssvm(model: ThetaModel, example: Example) -> PredictionRecord:
    """Highest-potential proposal under the learned weights."""
    if model.objective_kind != "ssvm":
        raise DataError(f"predict_ssvm needs an ssvm model, got {model.objective_kind!r}")
    pot = _test_time_psi(model, example)
    choice = int(np.argmax(pot))
    return PredictionRecord(
        image_id=example.image_id,
        box=example.proposals.boxes[choice],
        class_id=example.class_id,
        method="ssvm",
        score=float(pot[choice]),
    )


def predict_softmax(model: ThetaModel, example: Example) -> PredictionRecord:
    """Bayes-optimal box: minimize the expected loss under the learned
    conditional distribution over proposals."""
    if model.objective_kind != "softmax":
        raise DataError(
            f"predict_softmax needs a softmax model, got {model.objective_kind!r}"
        )
    pot = _test_time_psi(model, example)
    weights = np.exp(pot - pot.max())
    weights /= weights.sum()
    losses = loss_matrix(example.proposals.boxes, example.proposals.boxes, model.loss)
    expected = losses @ weights
    choice = int(np.argmin(expected))
    return PredictionRecord(
        image_id=example.image_id,
        box=example.proposals.boxes[choice],
        class_id=example.class_id,
        method="softmax",
        score=float(pot.max()),
        distribution=weights,
    )


def predict_with_model(model: ThetaModel, example: Example, **kwargs) -> PredictionRecord:
    if model.objective_kind == "ada":
        return predict_ada(model, example, **kwargs)
    if model.objective_kind == "ssvm":
        return predict_ssvm(model, example)
    return predict_softmax(model, example)


def _classification_score(model: ThetaModel, example: Example) -> float:
    """Cross-class arbitration score: negated game value for the
    adversarial objective, best potential for the baselines."""
    if model.objective_kind == "ada":
        return predict_ada(model, example).score
    return float(np.max(_test_time_psi(model, example)))


def predict_multiclass(
    models: Mapping[int, ThetaModel], example: Example
) -> PredictionRecord:
    """Evaluate every per-class model and keep the (class, box) pair with
    the best model-specific score; ties go to the lowest class id."""
    if not models:
        raise DataError("predict_multiclass needs at least one model")
    best_class: Optional[int] = None
    best_score = -np.inf
    for class_id in sorted(models):
        score = _classification_score(models[class_id], example)
        if score > best_score:
            best_class, best_score = class_id, score
    chosen = predict_with_model(models[best_class], example)
    return PredictionRecord(
        image_id=chosen.image_id,
        box=chosen.box,
        class_id=best_class,
        method=chosen.method,
        score=best_score,
        distribution=chosen.distribution,
        adversary=chosen.adversary,
    )


def accuracy_at_iou(
    predictions: Sequence[PredictionRecord],
    gts: Sequence[BoundingBox],
    alpha: float,
) -> float:
    """Fraction of predictions whose IoU with the aligned ground truth
    strictly exceeds alpha."""
    if len(predictions) != len(gts):
        raise DataError(
            f"{len(predictions)} predictions vs {len(gts)} ground truths"
        )
    if not predictions:
        raise DataError("accuracy over an empty list is undefined")
    hits = sum(1 for pred, gt in zip(predictions, gts) if iou(pred.box, gt) > alpha)
    return hits / len(predictions)


def mean_ap(per_class_scores: Mapping[int, float]) -> float:
    """Unweighted mean of the per-class accuracy scores."""
    if not per_class_scores:
        raise DataError("mean over an empty class map is undefined")
    return float(np.mean(list(per_class_scores.values())))


def detection_accuracy(
    predictions: Sequence[PredictionRecord],
    gts: Sequence[BoundingBox],
    alpha: float,
) -> float:
    """Joint criterion: predicted class matches the ground-truth class
    and the box overlaps it above alpha."""
    if len(predictions) != len(gts):
        raise DataError(
            f"{len(predictions)} predictions vs {len(gts)} ground truths"
        )
    if not predictions:
        raise DataError("accuracy over an empty list is undefined")
    hits = 0
    for pred, gt in zip(predictions, gts):
        if pred.class_id == gt.class_id and iou(pred.box, gt) > alpha:
            hits += 1
    return hits / len(predictions)


def export_augmentation(
    model: ThetaModel,
    data: Dataset,
    path: Union[str, Path],
    oracle_eps: float = 1e-6,
) -> tuple[list[AugmentationRecord], list[tuple[str, str]]]:
    """Solve the training-time equilibrium per example and write the
    adversary's support as weighted annotations.  Returns the records
    plus (image_id, error) pairs for examples whose solve failed; any
    failure leaves the output flagged as partial."""
    if model.objective_kind != "ada":
        raise DataError("augmentation export requires an ada model")
    records: list[AugmentationRecord] = []
    failures: list[tuple[str, str]] = []
    for ex in data.examples:
        try:
            pred = predict_ada(model, ex, oracle_eps=oracle_eps, train_time=True)
        except SolverError as exc:
            failures.append((ex.image_id, str(exc)))
            continue
        p = pred.adversary
        keep = np.nonzero(p > 1e-12)[0]
        weights = p[keep] / p[keep].sum()
        pairs = tuple(
            (ex.proposals.boxes[int(i)], float(w)) for i, w in zip(keep, weights)
        )
        records.append(AugmentationRecord(image_id=ex.image_id, pairs=pairs))
    write_augmentation(records, path, partial=bool(failures))
    return records, failures


# ---------------------------------------------------------------------------
# File formats


def write_predictions(
    predictions: Sequence[PredictionRecord], path: Union[str, Path]
) -> None:
    lines = []
    for pred in predictions:
        coords = ",".join(repr(float(c)) for c in pred.box.coords())
        lines.append(f"{pred.image_id},{pred.class_id},{coords},{repr(float(pred.score))}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_predictions(path: Union[str, Path]) -> list[PredictionRecord]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"predictions file not found: {path}")
    out = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 7:
            raise DataError(f"{path}:{lineno}: expected 7 comma-separated fields")
        try:
            box = BoundingBox(*(float(v) for v in parts[2:6]))
            out.append(
                PredictionRecord(
                    image_id=parts[0],
                    box=box,
                    class_id=int(parts[1]),
                    method="file",
                    score=float(parts[6]),
                )
            )
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    if not out:
        raise DataError(f"{path}: no predictions found")
    return out


def write_augmentation(
    records: Sequence[AugmentationRecord],
    path: Union[str, Path],
    partial: bool = False,
) -> None:
    lines = []
    if partial:
        lines.append("# PARTIAL OUTPUT: some images failed to solve")
    for rec in records:
        lines.append(f"image {rec.image_id}")
        for box, weight in rec.pairs:
            coords = ",".join(repr(float(c)) for c in box.coords())
            lines.append(f"{repr(float(weight))}: {coords}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_augmentation(path: Union[str, Path]) -> list[AugmentationRecord]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"augmentation file not found: {path}")
    records: list[AugmentationRecord] = []
    current_id: Optional[str] = None
    pairs: list[tuple[BoundingBox, float]] = []

    def flush():
        if current_id is not None:
            records.append(AugmentationRecord(image_id=current_id, pairs=tuple(pairs)))

    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("image "):
            flush()
            current_id = line[len("image "):].strip()
            pairs = []
            continue
        if current_id is None:
            raise DataError(f"{path}:{lineno}: weight line before any image header")
        weight_text, _, coord_text = line.partition(":")
        try:
            weight = float(weight_text)
            coords = [float(v) for v in coord_text.split(",")]
            if len(coords) != 4:
                raise ValueError("expected 4 coordinates")
            pairs.append((BoundingBox(*coords), weight))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    flush()
    if not records:
        raise DataError(f"{path}: no augmentation records found")
    return records
