"""Softmax logistic regression trained by seeded mini-batch gradient descent, plus k-fold CV.

The objective is the mean negative log-likelihood plus ``(l2_lambda / 2) * ||W||^2``
(the bias is not penalised). An epoch whose full-data loss ends above the
previous epoch's is rolled back and the step size halved, so the recorded loss
trace never increases.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import log_softmax, softmax

from .errors import TrainingError
from .featurize import FeatureVector, to_csr
from .metrics import get_metric

MODEL_FORMAT = "opinion-audit-lr"
MODEL_VERSION = 1
LAMBDA_GRID = (1e-2, 1e-3, 1e-4)
# Above this many cells the training matrix stays sparse.
_DENSE_LIMIT = 20_000_000


def worker_count() -> int:
    """Parallelism cap from OPINION_AUDIT_THREADS (default 1)."""
    raw = os.environ.get("OPINION_AUDIT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class TrainConfig:
    l2_lambda: float = 1e-4
    learning_rate: float = 0.1
    max_epochs: int = 100
    tolerance: float = 1e-6
    seed: int = 0
    batch_size: int = 32

    def __post_init__(self):
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("max_epochs and batch_size must be positive")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")

    def to_dict(self) -> dict:
        return {
            "l2_lambda": self.l2_lambda,
            "learning_rate": self.learning_rate,
            "max_epochs": self.max_epochs,
            "tolerance": self.tolerance,
            "seed": self.seed,
            "batch_size": self.batch_size,
        }


@dataclass(eq=False)
class LRModel:
    """Per-class weight rows of shape ``(n_classes, width)`` and per-class bias."""

    weights: np.ndarray
    bias: np.ndarray
    label_set: tuple[str, ...]
    spec_hash: str | None = None
    loss_trace: tuple[float, ...] = field(default=(), repr=False)

    @property
    def width(self) -> int:
        return self.weights.shape[1]

    def decision(self, X: sp.spmatrix | np.ndarray) -> np.ndarray:
        if X.shape[1] != self.width:
            raise ValueError(f"feature width {X.shape[1]} does not match model width {self.width}")
        return np.asarray(X @ self.weights.T) + self.bias

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.decision(X), axis=1)

    def predict_labels(self, X) -> list[str]:
        # argmax returns the first maximum, i.e. ties go to label_set order
        idx = np.argmax(self.decision(X), axis=1)
        return [self.label_set[i] for i in idx]

    def to_dict(self) -> dict:
        """Lossless JSON record; floats are stored as ``float.hex`` strings."""
        weights = {}
        for k, lab in enumerate(self.label_set):
            nz = np.flatnonzero(self.weights[k])
            weights[lab] = {str(int(i)): float(self.weights[k, i]).hex() for i in nz}
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "label_set": list(self.label_set),
            "spec_hash": self.spec_hash,
            "width": self.width,
            "bias": [float(b).hex() for b in self.bias],
            "weights": weights,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LRModel":
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise ValueError("not an opinion-audit model record (or unsupported version)")
        labels = tuple(d["label_set"])
        W = np.zeros((len(labels), int(d["width"])))
        for k, lab in enumerate(labels):
            for i, hx in d["weights"].get(lab, {}).items():
                W[k, int(i)] = float.fromhex(hx)
        bias = np.array([float.fromhex(h) for h in d["bias"]])
        return cls(W, bias, labels, d.get("spec_hash"))


def predict(model: LRModel, x: FeatureVector) -> tuple[str, dict[str, float]]:
    """Label and per-class probabilities for one feature vector."""
    if x.width != model.width:
        raise ValueError(f"feature width {x.width} does not match model width {model.width}")
    logits = model.bias.copy()
    for idx, w in x.entries.items():
        logits += w * model.weights[:, idx]
    probs = softmax(logits)
    label = model.label_set[int(np.argmax(logits))]
    return label, {lab: float(p) for lab, p in zip(model.label_set, probs)}


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------


def _encode(
    examples: Sequence[tuple[FeatureVector, str]],
    label_set: Sequence[str] | None,
    require_all: bool = True,
):
    if not examples:
        raise TrainingError("no training examples")
    labels = [lab for _, lab in examples]
    if label_set is None:
        label_set = sorted(set(labels))
    label_set = tuple(label_set)
    pos = {lab: i for i, lab in enumerate(label_set)}
    unknown = set(labels) - set(pos)
    if unknown:
        raise TrainingError(f"labels {sorted(unknown)} are not in label set {list(label_set)}")
    absent = [lab for lab in label_set if lab not in set(labels)]
    if absent and require_all:
        raise TrainingError(f"class(es) {absent} absent from training data")
    X = to_csr([x for x, _ in examples])
    y = np.array([pos[lab] for lab in labels], dtype=np.int64)
    return X, y, label_set


def loss_and_grad(W: np.ndarray, b: np.ndarray, X, y: np.ndarray, l2_lambda: float):
    """Regularised mean NLL and its gradient. ``W`` has shape ``(width, n_classes)``."""
    Z = np.asarray(X @ W) + b
    logp = log_softmax(Z, axis=1)
    n = X.shape[0]
    loss = -logp[np.arange(n), y].mean() + 0.5 * l2_lambda * float(np.sum(W * W))
    G = np.exp(logp)
    G[np.arange(n), y] -= 1.0
    G /= n
    gW = np.asarray(X.T @ G) + l2_lambda * W
    gb = G.sum(axis=0)
    return loss, gW, gb


def _loss(W, b, X, y, l2_lambda) -> float:
    Z = np.asarray(X @ W) + b
    logp = log_softmax(Z, axis=1)
    return float(-logp[np.arange(X.shape[0]), y].mean() + 0.5 * l2_lambda * np.sum(W * W))


def train(
    examples: Sequence[tuple[FeatureVector, str]],
    config: TrainConfig = TrainConfig(),
    label_set: Sequence[str] | None = None,
    spec_hash: str | None = None,
) -> LRModel:
    """Fit a logistic-regression model; deterministic for a fixed ``config.seed``.

    Raises :class:`TrainingError` if a class of ``label_set`` has no example or
    the loss becomes non-finite.
    """
    X, y, label_set = _encode(examples, label_set)
    n, width = X.shape
    K = len(label_set)

    # Columns no example touches keep zero weight under L2, so train on the used ones only.
    cols = np.unique(X.indices)
    Xc = X[:, cols]
    if n * len(cols) <= _DENSE_LIMIT:
        Xc = Xc.toarray()
    W = np.zeros((len(cols), K))
    b = np.zeros(K)
    lam = config.l2_lambda
    lr = config.learning_rate
    bs = config.batch_size
    rng = np.random.default_rng(config.seed)
    rows = np.arange(bs)

    prev = _loss(W, b, Xc, y, lam)
    trace = [prev]
    for _ in range(config.max_epochs):
        perm = rng.permutation(n)
        Xp, yp = Xc[perm], y[perm]
        W_old, b_old = W.copy(), b.copy()
        for start in range(0, n, bs):
            Xb = Xp[start:start + bs]
            yb = yp[start:start + bs]
            m = len(yb)
            P = Xb @ W + b
            P -= P.max(axis=1, keepdims=True)
            np.exp(P, out=P)
            P /= P.sum(axis=1, keepdims=True)
            P[rows[:m], yb] -= 1.0
            P /= m
            gW = Xb.T @ P
            if lam:
                gW += lam * W
            W -= lr * np.asarray(gW)
            b -= lr * P.sum(axis=0)
        cur = _loss(W, b, Xc, y, lam)
        if not math.isfinite(cur):
            raise TrainingError(f"non-finite training loss (learning_rate={lr})")
        if cur > prev:
            W, b = W_old, b_old
            lr *= 0.5
            continue
        trace.append(cur)
        rel = (prev - cur) / max(abs(prev), 1e-300)
        prev = cur
        if rel < config.tolerance:
            break

    full = np.zeros((K, width))
    full[:, cols] = W.T
    return LRModel(full, b, label_set, spec_hash, tuple(trace))


def grad_check(
    model: LRModel,
    examples: Sequence[tuple[FeatureVector, str]],
    epsilon: float = 1e-5,
    l2_lambda: float = 0.0,
) -> float:
    """Max relative error between the analytic gradient and central differences.

    Checked coordinates: every weight in a column touched by ``examples`` or
    already nonzero, and every bias. The relative error uses an absolute floor
    of 1e-4 in the denominator so that vanishing gradients do not amplify
    finite-difference round-off.
    """
    X, y, _ = _encode(examples, model.label_set, require_all=False)
    W = model.weights.T.copy()
    b = model.bias.copy()
    _, gW, gb = loss_and_grad(W, b, X, y, l2_lambda)

    cols = np.union1d(np.unique(X.indices), np.flatnonzero(np.any(model.weights != 0, axis=0)))
    worst = 0.0

    def rel(a, num):
        return abs(a - num) / max(abs(a), abs(num), 1e-4)

    for j in cols:
        for k in range(W.shape[1]):
            orig = W[j, k]
            W[j, k] = orig + epsilon
            up = _loss(W, b, X, y, l2_lambda)
            W[j, k] = orig - epsilon
            down = _loss(W, b, X, y, l2_lambda)
            W[j, k] = orig
            worst = max(worst, rel(gW[j, k], (up - down) / (2 * epsilon)))
    for k in range(len(b)):
        orig = b[k]
        b[k] = orig + epsilon
        up = _loss(W, b, X, y, l2_lambda)
        b[k] = orig - epsilon
        down = _loss(W, b, X, y, l2_lambda)
        b[k] = orig
        worst = max(worst, rel(gb[k], (up - down) / (2 * epsilon)))
    return worst


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FoldPlan:
    k: int
    folds: tuple[tuple[int, ...], ...]

    def check(self, n: int) -> None:
        """Raise AssertionError unless folds are disjoint, cover range(n), and differ in size by <= 1."""
        flat = [i for f in self.folds for i in f]
        assert len(flat) == len(set(flat)), "folds overlap"
        assert sorted(flat) == list(range(n)), "folds do not cover all indices"
        sizes = [len(f) for f in self.folds]
        assert max(sizes) - min(sizes) <= 1, f"unbalanced fold sizes {sizes}"

    def train_indices(self, i: int) -> list[int]:
        return sorted(j for f, fold in enumerate(self.folds) if f != i for j in fold)


def make_folds(n: int, k: int = 5, seed: int = 0) -> FoldPlan:
    if k < 2:
        raise ValueError("k must be >= 2")
    if n < k:
        raise ValueError(f"cannot split {n} items into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    folds = tuple(tuple(sorted(int(i) for i in part)) for part in np.array_split(perm, k))
    return FoldPlan(k, folds)


@dataclass(frozen=True)
class CVResult:
    fold_scores: tuple[float, ...]
    mean: float
    plan: FoldPlan


def cross_validate(
    examples: Sequence[tuple[FeatureVector, str]],
    config: TrainConfig = TrainConfig(),
    k: int = 5,
    metric: str | Callable = "accuracy",
    groups: Sequence[str] | None = None,
    label_set: Sequence[str] | None = None,
    fold_seed: int | None = None,
) -> CVResult:
    """Train on k-1 folds, score the held-out fold, for each fold.

    With ``groups`` the folds are drawn over distinct group keys, so all
    examples sharing a key land in the same fold.
    """
    score = get_metric(metric) if isinstance(metric, str) else metric
    seed = config.seed if fold_seed is None else fold_seed
    n = len(examples)
    if groups is None:
        plan = make_folds(n, k, seed)
        plan.check(n)
        members = [list(f) for f in plan.folds]
    else:
        if len(groups) != n:
            raise ValueError("groups must align with examples")
        keys = sorted(set(groups))
        plan = make_folds(len(keys), k, seed)
        plan.check(len(keys))
        where = {key: f for f, fold in enumerate(plan.folds) for key in (keys[i] for i in fold)}
        members = [[] for _ in range(k)]
        for i, g in enumerate(groups):
            members[where[g]].append(i)

    def run(i: int) -> float:
        held = set(members[i])
        tr = [examples[j] for j in range(n) if j not in held]
        te = [examples[j] for j in members[i]]
        model = train(tr, config, label_set)
        pred = model.predict_labels(to_csr([x for x, _ in te], model.width))
        return score([lab for _, lab in te], pred)

    workers = min(worker_count(), k)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            scores = list(pool.map(run, range(k)))
    else:
        scores = [run(i) for i in range(k)]
    return CVResult(tuple(scores), math.fsum(scores) / k, plan)


@dataclass(frozen=True)
class TuningResult:
    best: TrainConfig
    table: dict[float, CVResult]

    def to_dict(self) -> dict:
        return {
            "selected_l2_lambda": self.best.l2_lambda,
            "grid": [
                {"l2_lambda": lam, "fold_scores": list(r.fold_scores), "mean": r.mean}
                for lam, r in self.table.items()
            ],
        }


def tune(
    examples: Sequence[tuple[FeatureVector, str]],
    config: TrainConfig = TrainConfig(),
    grid: Sequence[float] = LAMBDA_GRID,
    k: int = 5,
    metric: str | Callable = "accuracy",
    groups: Sequence[str] | None = None,
    label_set: Sequence[str] | None = None,
) -> TuningResult:
    """Grid search over ``l2_lambda``; the first grid value with the best mean fold score wins."""
    table = {}
    for lam in grid:
        table[lam] = cross_validate(
            examples, replace(config, l2_lambda=lam), k, metric, groups, label_set,
            fold_seed=config.seed,
        )
    best_lam = max(grid, key=lambda lam: (table[lam].mean, -grid.index(lam)))
    return TuningResult(replace(config, l2_lambda=best_lam), table)
