"""Trainers for the adversarial objective and the two baselines.

All three learn the same object: a potential vector theta over feature
space.  The adversarial trainer descends the feature-matching
subgradient (the gap between the equilibrium adversary's expected
features and the ground-truth features); the SSVM baseline runs
cutting-plane constraint generation over a hinge objective; the softmax
baseline maximizes the likelihood of high-IoU proposals.  Everything is
deterministic given (dataset, config, seed).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import DataError, SolverError
from .features import ExtractorSpec, FeatureMatrix
from .game import double_oracle
from .geometry import BoundingBox, LossSpec, boxes_array, iou_matrix, loss_matrix
from .proposals import ProposalSet

__all__ = [
    "Example",
    "Dataset",
    "TrainConfig",
    "ThetaModel",
    "ada_gradient",
    "constraint_residual",
    "train_ada",
    "train_ssvm",
    "train_softmax",
    "save_model",
    "load_model",
]

log = logging.getLogger(__name__)

MODEL_TAG = "boxgame-model v1"


@dataclass(frozen=True)
class Example:
    """One training/evaluation image with materialized proposals and
    features.  For training data the ground truth is guaranteed to be
    proposal number features.gt_index."""

    image_id: str
    class_id: int
    gt: BoundingBox
    proposals: ProposalSet
    features: FeatureMatrix


@dataclass(frozen=True)
class Dataset:
    examples: tuple[Example, ...]

    def __post_init__(self) -> None:
        if len(self.examples) == 0:
            raise DataError("dataset must contain at least one example")
        dims = {ex.features.dim for ex in self.examples}
        if len(dims) != 1:
            raise DataError(f"inconsistent feature dimensions across examples: {dims}")
        for ex in self.examples:
            if len(ex.proposals) != len(ex.features):
                raise DataError(
                    f"{ex.image_id}: {len(ex.proposals)} proposals vs "
                    f"{len(ex.features)} feature rows"
                )
            gi = ex.features.gt_index
            if ex.proposals.boxes[gi].coords() != ex.gt.coords():
                raise DataError(
                    f"{ex.image_id}: ground truth is not proposal {gi}; "
                    "training data must force-include it"
                )

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def dim(self) -> int:
        return self.examples[0].features.dim

    def restrict_to_class(self, class_id: int) -> "Dataset":
        kept = tuple(ex for ex in self.examples if ex.class_id == class_id)
        if not kept:
            raise DataError(f"no examples with class_id {class_id}")
        return Dataset(examples=kept)

    @property
    def class_ids(self) -> tuple[int, ...]:
        return tuple(sorted({ex.class_id for ex in self.examples}))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.1
    adagrad_eps: float = 1e-8
    minibatch_size: int = 1
    rng_seed: int = 0
    oracle_eps: float = 1e-6
    ssvm_lambda: float = 1e-3
    ssvm_rounds: int = 8
    ssvm_violation_tol: float = 1e-4
    softmax_pos_iou: float = 0.5
    grad_tol: float = 1e-6

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise DataError("epochs must be nonnegative")
        if self.learning_rate <= 0 or self.adagrad_eps <= 0:
            raise DataError("learning rate and AdaGrad epsilon must be positive")
        if self.minibatch_size < 1:
            raise DataError("minibatch size must be >= 1")
        if self.oracle_eps <= 0 or self.grad_tol <= 0 or self.ssvm_violation_tol <= 0:
            raise DataError("tolerances must be positive")
        if self.ssvm_lambda <= 0:
            raise DataError("SSVM lambda must be positive")
        if self.ssvm_rounds < 1:
            raise DataError("SSVM needs at least one constraint-generation round")
        if not (0.0 < self.softmax_pos_iou <= 1.0):
            raise DataError("softmax positive-IoU threshold must lie in (0, 1]")


@dataclass(frozen=True)
class ThetaModel:
    theta: np.ndarray
    objective_kind: str
    loss: LossSpec
    extractor: ExtractorSpec
    epochs_run: int = 0
    final_grad_norm: float = 0.0
    seed: int = 0
    ssvm_lambda: Optional[float] = None

    def __post_init__(self) -> None:
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim != 1 or not np.all(np.isfinite(theta)):
            raise DataError("theta must be a finite vector")
        if self.objective_kind not in ("ada", "ssvm", "softmax"):
            raise DataError(f"unknown objective kind {self.objective_kind!r}")
        object.__setattr__(self, "theta", theta)

    @property
    def dim(self) -> int:
        return self.theta.shape[0]


def ada_gradient(p: np.ndarray, features: FeatureMatrix) -> np.ndarray:
    """Per-example feature-matching gap: E_p[phi] - phi(ground truth)."""
    p = np.asarray(p, dtype=float)
    if p.shape != (len(features),):
        raise DataError(
            f"adversary distribution length {p.shape} does not match "
            f"{len(features)} feature rows"
        )
    return features.rows.T @ p - features.rows[features.gt_index]


def _loss_matrices(data: Dataset, spec: LossSpec) -> list[np.ndarray]:
    return [loss_matrix(ex.proposals.boxes, ex.proposals.boxes, spec) for ex in data.examples]


def _example_equilibrium(ex: Example, losses: np.ndarray, theta: np.ndarray, config: TrainConfig):
    psi = (ex.features.rows - ex.features.rows[ex.features.gt_index]) @ theta
    psi[ex.features.gt_index] = 0.0
    try:
        return double_oracle(lambda i: losses[i], psi, eps=config.oracle_eps)
    except SolverError as exc:
        raise SolverError(f"equilibrium failed on image {ex.image_id!r}: {exc}") from exc


def constraint_residual(
    data: Dataset,
    theta: np.ndarray,
    config: TrainConfig,
    loss: LossSpec,
    losses: Optional[list[np.ndarray]] = None,
) -> np.ndarray:
    """Dataset-average feature-matching gap at a fixed theta."""
    if losses is None:
        losses = _loss_matrices(data, loss)
    total = np.zeros(data.dim)
    for ex, mat in zip(data.examples, losses):
        eq = _example_equilibrium(ex, mat, theta, config)
        total += ada_gradient(eq.p, ex.features)
    return total / len(data)


def train_ada(
    data: Dataset,
    config: TrainConfig,
    loss: LossSpec = LossSpec(),
    extractor: ExtractorSpec = ExtractorSpec(),
    history: Optional[list] = None,
) -> ThetaModel:
    """Feature-matching subgradient descent on the dual adversarial
    objective.

    Per visited example: solve the equilibrium at the current theta,
    accumulate the adversary-vs-truth feature gap, and take an AdaGrad
    step per minibatch.  Stops when the epoch-aggregate gap's infinity
    norm falls below config.grad_tol.
    """
    dim = data.dim
    theta = np.zeros(dim)
    accum = np.zeros(dim)
    losses = _loss_matrices(data, loss)
    rng = np.random.default_rng(config.rng_seed)
    n = len(data)
    epochs_run = 0
    final_norm = float("inf")
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_sum = np.zeros(dim)
        for lo in range(0, n, config.minibatch_size):
            batch = sorted(order[lo : lo + config.minibatch_size].tolist())
            grad = np.zeros(dim)
            # Reduction runs in ascending example order for reproducibility.
            for idx in batch:
                ex = data.examples[idx]
                eq = _example_equilibrium(ex, losses[idx], theta, config)
                grad += ada_gradient(eq.p, ex.features)
            epoch_sum += grad
            grad /= len(batch)
            accum += grad * grad
            theta -= config.learning_rate * grad / np.sqrt(accum + config.adagrad_eps)
        epochs_run = epoch + 1
        final_norm = float(np.max(np.abs(epoch_sum / n)))
        if history is not None:
            history.append(final_norm)
        log.info("ada epoch %d: residual inf-norm %.6g", epochs_run, final_norm)
        if final_norm <= config.grad_tol:
            break
    if config.epochs == 0:
        final_norm = 0.0
    return ThetaModel(
        theta=theta,
        objective_kind="ada",
        loss=loss,
        extractor=extractor,
        epochs_run=epochs_run,
        final_grad_norm=final_norm,
        seed=config.rng_seed,
    )


# ---------------------------------------------------------------------------
# SSVM baseline


def _ssvm_pack(data: Dataset, constraints: list[list[int]], loss_rows: list[np.ndarray]):
    """Pad per-example constraints into dense arrays for the inner solve."""
    n = len(data)
    dim = data.dim
    cmax = max(1, max(len(c) for c in constraints))
    diffs = np.zeros((n, cmax, dim))
    margins = np.full((n, cmax), -np.inf)
    for i, (ex, cons) in enumerate(zip(data.examples, constraints)):
        gt_row = ex.features.rows[ex.features.gt_index]
        for j, prop_idx in enumerate(cons):
            diffs[i, j] = gt_row - ex.features.rows[prop_idx]
            margins[i, j] = loss_rows[i][prop_idx]
    return diffs, margins


def _ssvm_objective(theta, diffs, base, lam):
    scores = base - diffs @ theta
    xi = np.clip(scores.max(axis=1), 0.0, None)
    return lam * float(np.linalg.norm(theta)) + float(xi.mean())


def _ssvm_inner(theta, diffs, base, lam, config: TrainConfig):
    """AdaGrad subgradient descent with tail averaging on the hinge form
    of the restricted problem."""
    n = diffs.shape[0]
    accum = np.zeros_like(theta)
    theta = theta.copy()
    tail_from = max(1, config.epochs // 2)
    tail = np.zeros_like(theta)
    tail_count = 0
    for it in range(config.epochs):
        scores = base - np.einsum("ncd,d->nc", diffs, theta)
        best = np.argmax(scores, axis=1)
        xi = scores[np.arange(n), best]
        active = xi > 0.0
        grad = np.zeros_like(theta)
        if active.any():
            grad -= diffs[np.arange(n), best][active].sum(axis=0) / n
        norm = np.linalg.norm(theta)
        if norm > 0.0:
            grad += lam * theta / norm
        accum += grad * grad
        theta -= config.learning_rate * grad / np.sqrt(accum + config.adagrad_eps)
        if it >= tail_from:
            tail += theta
            tail_count += 1
    if tail_count:
        averaged = tail / tail_count
        if _ssvm_objective(averaged, diffs, base, lam) <= _ssvm_objective(
            theta, diffs, base, lam
        ):
            return averaged
    return theta


def _ssvm_fit(data: Dataset, config: TrainConfig, loss: LossSpec):
    """Cutting-plane outer loop; returns (theta, constraint sets, slacks)."""
    dim = data.dim
    theta = np.zeros(dim)
    constraints: list[list[int]] = [[] for _ in data.examples]
    gt_loss_rows = [
        loss_matrix([ex.gt], ex.proposals.boxes, loss)[0] for ex in data.examples
    ]
    for round_no in range(config.ssvm_rounds):
        added = False
        for i, ex in enumerate(data.examples):
            feats = ex.features.rows
            gt_row = feats[ex.features.gt_index]
            aug = gt_loss_rows[i] + feats @ theta
            most_violated = int(np.argmax(aug))
            current = 0.0
            if constraints[i]:
                current = max(
                    0.0,
                    max(
                        gt_loss_rows[i][c] - float(theta @ (gt_row - feats[c]))
                        for c in constraints[i]
                    ),
                )
            violation = gt_loss_rows[i][most_violated] - float(
                theta @ (gt_row - feats[most_violated])
            )
            if violation > current + config.ssvm_violation_tol and most_violated not in constraints[i]:
                constraints[i].append(most_violated)
                added = True
        if not added:
            break
        diffs, base = _ssvm_pack(data, constraints, gt_loss_rows)
        theta = _ssvm_inner(theta, diffs, base, config.ssvm_lambda, config)
    slacks = []
    for i, ex in enumerate(data.examples):
        feats = ex.features.rows
        gt_row = feats[ex.features.gt_index]
        xi = 0.0
        for c in constraints[i]:
            xi = max(xi, gt_loss_rows[i][c] - float(theta @ (gt_row - feats[c])))
        slacks.append(xi)
    return theta, constraints, slacks


def train_ssvm(
    data: Dataset,
    config: TrainConfig,
    loss: LossSpec = LossSpec(),
    extractor: ExtractorSpec = ExtractorSpec(),
    history: Optional[list] = None,
) -> ThetaModel:
    """Margin-based baseline via iterative constraint generation.

    Minimizes lambda * ||theta||_2 + mean slack, where each round adds
    every example's most loss-augmented proposal as a new constraint and
    re-solves by subgradient descent on the hinge form.
    """
    theta, constraints, slacks = _ssvm_fit(data, config, loss)
    if history is not None:
        history.extend(slacks)
    return ThetaModel(
        theta=theta,
        objective_kind="ssvm",
        loss=loss,
        extractor=extractor,
        epochs_run=config.epochs,
        final_grad_norm=float(np.mean(slacks)),
        seed=config.rng_seed,
        ssvm_lambda=config.ssvm_lambda,
    )


# ---------------------------------------------------------------------------
# Softmax baseline


def _softmax_positives(data: Dataset, pos_iou: float) -> list[np.ndarray]:
    out = []
    for ex in data.examples:
        overlaps = iou_matrix(boxes_array([ex.gt]), ex.proposals.as_array())[0]
        pos = np.nonzero(overlaps >= pos_iou)[0]
        if pos.size == 0:
            raise DataError(
                f"{ex.image_id}: no proposal reaches IoU {pos_iou} with the ground truth"
            )
        out.append(pos)
    return out


def _logsumexp(values: np.ndarray) -> float:
    m = float(np.max(values))
    return m + float(np.log(np.sum(np.exp(values - m))))


def softmax_objective(data: Dataset, theta: np.ndarray, positives: Sequence[np.ndarray]) -> float:
    """Sum over examples of log P(positive set | proposals)."""
    total = 0.0
    for ex, pos in zip(data.examples, positives):
        pot = ex.features.rows @ theta
        total += _logsumexp(pot[pos]) - _logsumexp(pot)
    return total


def _softmax_gradient(data: Dataset, theta: np.ndarray, positives, indices) -> np.ndarray:
    grad = np.zeros_like(theta)
    for idx in indices:
        ex = data.examples[idx]
        pos = positives[idx]
        pot = ex.features.rows @ theta
        w_all = np.exp(pot - pot.max())
        w_all /= w_all.sum()
        pot_pos = pot[pos]
        w_pos = np.exp(pot_pos - pot_pos.max())
        w_pos /= w_pos.sum()
        grad += ex.features.rows[pos].T @ w_pos - ex.features.rows.T @ w_all
    return grad


def train_softmax(
    data: Dataset,
    config: TrainConfig,
    loss: LossSpec = LossSpec(),
    extractor: ExtractorSpec = ExtractorSpec(),
    history: Optional[list] = None,
) -> ThetaModel:
    """Conditional-likelihood baseline over high-IoU proposals.

    Maximizes sum_n [logsumexp(theta . phi over positives) - logsumexp
    over all proposals] by AdaGrad ascent.  Full-batch runs carry a
    step-halving safeguard so the objective never decreases.
    """
    positives = _softmax_positives(data, config.softmax_pos_iou)
    dim = data.dim
    theta = np.zeros(dim)
    accum = np.zeros(dim)
    n = len(data)
    rng = np.random.default_rng(config.rng_seed)
    full_batch = config.minibatch_size >= n
    objective = softmax_objective(data, theta, positives)
    epochs_run = 0
    grad_norm = 0.0
    for epoch in range(config.epochs):
        if full_batch:
            grad = _softmax_gradient(data, theta, positives, range(n))
            accum += grad * grad
            step = config.learning_rate * grad / np.sqrt(accum + config.adagrad_eps)
            scale = 1.0
            for _ in range(40):
                candidate = theta + scale * step
                cand_obj = softmax_objective(data, candidate, positives)
                if cand_obj >= objective - 1e-12:
                    theta = candidate
                    objective = cand_obj
                    break
                scale *= 0.5
            grad_norm = float(np.max(np.abs(grad)))
        else:
            order = rng.permutation(n)
            for lo in range(0, n, config.minibatch_size):
                batch = sorted(order[lo : lo + config.minibatch_size].tolist())
                grad = _softmax_gradient(data, theta, positives, batch)
                accum += grad * grad
                theta += config.learning_rate * grad / np.sqrt(accum + config.adagrad_eps)
            objective = softmax_objective(data, theta, positives)
            grad_norm = float(np.max(np.abs(_softmax_gradient(data, theta, positives, range(n)))))
        epochs_run = epoch + 1
        if history is not None:
            history.append(objective)
        log.info("softmax epoch %d: objective %.6g", epochs_run, objective)
        if grad_norm <= config.grad_tol:
            break
    return ThetaModel(
        theta=theta,
        objective_kind="softmax",
        loss=loss,
        extractor=extractor,
        epochs_run=epochs_run,
        final_grad_norm=grad_norm,
        seed=config.rng_seed,
    )


# ---------------------------------------------------------------------------
# Model persistence


def save_model(model: ThetaModel, path: Union[str, Path]) -> None:
    lines = [
        MODEL_TAG,
        f"objective = {model.objective_kind}",
        f"loss = {model.loss.to_text()}",
        f"extractor = {model.extractor.to_text()}",
        f"dim = {model.dim}",
        f"epochs_run = {model.epochs_run}",
        f"final_grad_norm = {model.final_grad_norm:.17g}",
        f"seed = {model.seed}",
    ]
    if model.ssvm_lambda is not None:
        lines.append(f"lambda = {model.ssvm_lambda:.17g}")
    lines.append("theta:")
    lines.extend(f"{v:.17g}" for v in model.theta)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path: Union[str, Path]) -> ThetaModel:
    path = Path(path)
    if not path.exists():
        raise DataError(f"model file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != MODEL_TAG:
        raise DataError(
            f"{path}: unsupported model version tag "
            f"{lines[0]!r} (expected {MODEL_TAG!r})" if lines else f"{path}: empty model file"
        )
    fields: dict[str, str] = {}
    theta_vals: list[float] = []
    in_theta = False
    for lineno, line in enumerate(lines[1:], start=2):
        text = line.strip()
        if not text:
            continue
        if in_theta:
            try:
                theta_vals.append(float(text))
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed theta entry") from None
            continue
        if text == "theta:":
            in_theta = True
            continue
        if "=" not in text:
            raise DataError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = text.partition("=")
        fields[key.strip()] = value.strip()
    required = ("objective", "loss", "extractor", "dim", "epochs_run", "final_grad_norm", "seed")
    for key in required:
        if key not in fields:
            raise DataError(f"{path}: missing field {key!r} (corrupt or truncated file)")
    dim = int(fields["dim"])
    if len(theta_vals) != dim:
        raise DataError(
            f"{path}: expected {dim} theta entries, found {len(theta_vals)} (truncated?)"
        )
    return ThetaModel(
        theta=np.array(theta_vals),
        objective_kind=fields["objective"],
        loss=LossSpec.from_text(fields["loss"]),
        extractor=ExtractorSpec.from_text(fields["extractor"]),
        epochs_run=int(fields["epochs_run"]),
        final_grad_norm=float(fields["final_grad_norm"]),
        seed=int(fields["seed"]),
        ssvm_lambda=float(fields["lambda"]) if "lambda" in fields else None,
    )
