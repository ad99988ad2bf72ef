"""L2-regularized L1-hinge linear SVM trained by dual coordinate descent.

Solves, over the bias-augmented feature space (a constant 1 appended to
every example, so the bias is regularized like any other weight):

    min_w  1/2 ||w||^2 + C * sum_i weight(y_i) * max(0, 1 - y_i w.x_i)

via its dual

    min_a  1/2 a'Qa - sum_i a_i   s.t.  0 <= a_i <= C*weight(y_i)

with Q_ij = y_i y_j x_i.x_j.  One pass visits every coordinate in a
seed-shuffled order and moves it to its box-constrained minimum, so the
dual objective never increases.  Training stops when the largest projected
gradient seen in a pass drops below ``tol``.

Only the product C * class_weight matters to the optimizer; splitting it
between the two knobs differently yields the same model up to rounding.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ._util import stable_seed
from .errors import DataError, DegenerateLabelsError, InsufficientDataError, ValidationError

MODEL_MAGIC = b"TSVM0001"

# Coordinate moves smaller than this are treated as converged, mirroring
# the usual dual-CD implementations.
_PG_EPS = 1e-12


@dataclass(frozen=True)
class SvmConfig:
    """Training configuration.

    class_weights may be None (unit weights), the string "balanced"
    (n/(2*n_pos), n/(2*n_neg)) to counter label imbalance, or an explicit
    (w_pos, w_neg) pair.
    """

    cost: float = 1.0
    class_weights: str | tuple[float, float] | None = "balanced"
    tol: float = 1e-3
    max_epochs: int = 1000
    seed: int = 0


@dataclass(frozen=True, eq=False)
class LinearModel:
    w: np.ndarray  # (d,) float64, read only
    b: float
    cost: float
    class_weight_pos: float
    class_weight_neg: float
    seed: int
    epochs_run: int
    final_objective: float
    dual_objectives: tuple[float, ...]  # per-epoch dual objective history

    def __post_init__(self):
        w = np.ascontiguousarray(self.w, dtype=np.float64)
        w.setflags(write=False)
        object.__setattr__(self, "w", w)


def _resolve_class_weights(
    spec: str | tuple[float, float] | None, y: np.ndarray
) -> tuple[float, float]:
    if spec is None:
        return 1.0, 1.0
    if spec == "balanced":
        n = y.size
        n_pos = int((y > 0).sum())
        n_neg = n - n_pos
        return n / (2.0 * n_pos), n / (2.0 * n_neg)
    w_pos, w_neg = float(spec[0]), float(spec[1])
    if w_pos <= 0 or w_neg <= 0:
        raise ValidationError("class weights must be positive")
    return w_pos, w_neg


def _check_training_inputs(X: np.ndarray, y: np.ndarray) -> None:
    if X.ndim != 2:
        raise ValidationError("X must be a 2-d array")
    if y.shape != (X.shape[0],):
        raise ValidationError("y length must match X rows")
    if not np.isfinite(X).all():
        raise ValidationError("X contains non-finite values")
    if not np.all(np.abs(y) == 1):
        raise ValidationError("labels must be +1 or -1")
    if (y > 0).all() or (y < 0).all():
        raise DegenerateLabelsError("training data contains a single class")


def train(X, y, config: SvmConfig = SvmConfig()) -> LinearModel:
    """Train a binary linear SVM; deterministic in (data, config, seed)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(y, dtype=np.float64).ravel()
    _check_training_inputs(X, y)
    if config.cost <= 0:
        raise ValidationError("cost must be positive")
    if config.max_epochs < 1:
        raise ValidationError("max_epochs must be >= 1")

    n, d = X.shape
    w_pos, w_neg = _resolve_class_weights(config.class_weights, y)
    box = config.cost * np.where(y > 0, w_pos, w_neg)

    Xa = np.hstack([X, np.ones((n, 1))])
    qdiag = np.einsum("ij,ij->i", Xa, Xa)
    alpha = np.zeros(n)
    w = np.zeros(d + 1)
    rng = np.random.default_rng(config.seed)

    dual_history: list[float] = []
    epochs_run = 0
    for _ in range(config.max_epochs):
        order = rng.permutation(n)
        max_violation = 0.0
        for i in order:
            xi = Xa[i]
            yi = y[i]
            grad = yi * (w @ xi) - 1.0
            ai = alpha[i]
            ci = box[i]
            if ai <= 0.0:
                pg = min(grad, 0.0)
            elif ai >= ci:
                pg = max(grad, 0.0)
            else:
                pg = grad
            if abs(pg) > _PG_EPS:
                if abs(pg) > max_violation:
                    max_violation = abs(pg)
                new_ai = min(max(ai - grad / qdiag[i], 0.0), ci)
                if new_ai != ai:
                    w += (new_ai - ai) * yi * xi
                    alpha[i] = new_ai
        epochs_run += 1
        dual_history.append(0.5 * float(w @ w) - float(alpha.sum()))
        if max_violation < config.tol:
            break

    model = LinearModel(
        w=w[:d],
        b=float(w[d]),
        cost=config.cost,
        class_weight_pos=w_pos,
        class_weight_neg=w_neg,
        seed=config.seed,
        epochs_run=epochs_run,
        final_objective=0.0,
        dual_objectives=tuple(dual_history),
    )
    return replace(model, final_objective=objective(model, X, y))


def decision_value(model: LinearModel, x) -> float:
    """Margin score w.x + b for one example."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape != model.w.shape:
        raise ValidationError(f"expected {model.w.size} features, got {x.size}")
    return float(model.w @ x + model.b)


def decision_values(model: LinearModel, X) -> np.ndarray:
    """Margin scores for a batch of rows."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.w.size:
        raise ValidationError(f"expected (n, {model.w.size}) features")
    return X @ model.w + model.b


def predict(model: LinearModel, x) -> int:
    """Label for one example; an exactly-zero margin resolves to +1."""
    return 1 if decision_value(model, x) >= 0.0 else -1


def predict_batch(model: LinearModel, X) -> np.ndarray:
    return np.where(decision_values(model, X) >= 0.0, 1, -1)


def objective(model: LinearModel, X, y) -> float:
    """Primal objective 1/2||w||^2 + C*sum weight(y_i)*hinge_i (bias included)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[1] != model.w.size or y.size != X.shape[0]:
        raise ValidationError("dimension mismatch between model and data")
    margins = y * (X @ model.w + model.b)
    hinge = np.maximum(0.0, 1.0 - margins)
    weights = np.where(y > 0, model.class_weight_pos, model.class_weight_neg)
    reg = 0.5 * (float(model.w @ model.w) + model.b * model.b)
    return reg + model.cost * float(weights @ hinge)


# ---------------------------------------------------------------------------
# Cost selection


def stratified_folds(y, folds: int, seed: int) -> list[np.ndarray]:
    """Deterministic stratified fold assignment; returns test-index arrays."""
    y = np.asarray(y).ravel()
    if folds < 2:
        raise ValidationError("folds must be >= 2")
    rng = np.random.default_rng(stable_seed(seed, "cv-folds"))
    pos = np.flatnonzero(y > 0)
    neg = np.flatnonzero(y < 0)
    if pos.size < folds or neg.size < folds:
        raise InsufficientDataError(
            f"need >= {folds} examples of each class for {folds}-fold CV"
        )
    pos = rng.permutation(pos)
    neg = rng.permutation(neg)
    return [
        np.sort(np.concatenate([p, q]))
        for p, q in zip(np.array_split(pos, folds), np.array_split(neg, folds))
    ]


def cross_validate_cost(
    X,
    y,
    grid: Sequence[float],
    folds: int,
    seed: int,
    config: SvmConfig = SvmConfig(),
) -> float:
    """Pick the grid cost with the best mean balanced accuracy across folds.

    Ties go to the smaller cost.  The ``cost`` field of ``config`` is
    ignored; everything else (weights, tol, epoch cap) carries over.
    """
    from .visualness import balanced_accuracy  # local import, no cycle at module load

    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(y, dtype=np.float64).ravel()
    if not grid:
        raise ValidationError("cost grid is empty")
    fold_indices = stratified_folds(y, folds, seed)

    best_cost = None
    best_score = -np.inf
    for ci, cost in enumerate(grid):
        scores = []
        for fi, test_idx in enumerate(fold_indices):
            train_mask = np.ones(y.size, dtype=bool)
            train_mask[test_idx] = False
            fold_config = replace(
                config, cost=float(cost), seed=stable_seed(seed, "cv", ci, fi)
            )
            model = train(X[train_mask], y[train_mask], fold_config)
            preds = predict_batch(model, X[test_idx])
            scores.append(balanced_accuracy(preds, y[test_idx]))
        score = float(np.mean(scores))
        if score > best_score or (score == best_score and cost < best_cost):
            best_score = score
            best_cost = float(cost)
    return best_cost


# ---------------------------------------------------------------------------
# Model file IO

_CONFIG_PACK = "<dddQd"  # cost, w_pos, w_neg, seed, tol


def save_model(model: LinearModel, path: str | Path, tol: float = 1e-3) -> None:
    """Persist weights, bias, and training config (provenance fields are not
    serialized; a loaded model reports zero epochs and a NaN objective)."""
    d = model.w.size
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", d))
        fh.write(np.ascontiguousarray(model.w, dtype="<f8").tobytes())
        fh.write(struct.pack("<d", model.b))
        fh.write(
            struct.pack(
                _CONFIG_PACK,
                model.cost,
                model.class_weight_pos,
                model.class_weight_neg,
                model.seed,
                tol,
            )
        )


def load_model(path: str | Path) -> LinearModel:
    blob = Path(path).read_bytes()
    if not blob.startswith(MODEL_MAGIC):
        raise DataError(f"{path}: bad magic, not a model file")
    offset = len(MODEL_MAGIC)
    (d,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    expected = offset + (d + 1) * 8 + struct.calcsize(_CONFIG_PACK)
    if len(blob) != expected:
        raise DataError(f"{path}: model file has wrong length")
    w = np.frombuffer(blob, dtype="<f8", count=d, offset=offset).copy()
    offset += d * 8
    (b,) = struct.unpack_from("<d", blob, offset)
    offset += 8
    cost, w_pos, w_neg, seed, _tol = struct.unpack_from(_CONFIG_PACK, blob, offset)
    return LinearModel(
        w=w,
        b=b,
        cost=cost,
        class_weight_pos=w_pos,
        class_weight_neg=w_neg,
        seed=int(seed),
        epochs_run=0,
        final_objective=float("nan"),
        dual_objectives=(),
    )
