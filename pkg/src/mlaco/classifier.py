"""Linear SVM and logistic-regression edge classifiers.

Both models minimise the L2-regularised objectives with separate penalty
weights for the positive (optimal-edge) and negative classes:

    svm:    1/2 w'w + sum_i r_i max(0, 1 - l_i z_i)
    logreg: 1/2 w'w + sum_i r_i log2(1 + exp(-l_i z_i))

with z = w'f + b and r_i = reg_pos for l_i = +1, reg_neg otherwise.
Predictions squash z through the logistic function; no calibration.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateLabelsError, DivergenceError
from .features import EdgeFeatureMatrix

log = logging.getLogger(__name__)

KINDS = ("svm", "logreg")
N_FEATURES = 5
LN2 = np.log(2.0)


@dataclass(frozen=True)
class LinearModel:
    kind: str
    weights: tuple
    bias: float
    reg_pos: float
    reg_neg: float
    training_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unsupported model kind {self.kind!r}; choose from {KINDS}")
        w = tuple(float(x) for x in self.weights)
        if len(w) != N_FEATURES or not all(np.isfinite(w)) or not np.isfinite(self.bias):
            raise ValueError("weights must be 5 finite numbers and bias finite")
        if self.reg_pos <= 0 or self.reg_neg <= 0:
            raise ValueError("regularisation weights must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def w(self) -> np.ndarray:
        return np.array(self.weights)

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "weights": list(self.weights),
            "bias": self.bias,
            "reg_pos": float(self.reg_pos),
            "reg_neg": float(self.reg_neg),
            "training_meta": self.training_meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    @property
    def model_id(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:12]

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json() + "\n")
        return path

    @classmethod
    def from_json_dict(cls, d: dict) -> "LinearModel":
        return cls(
            kind=d["kind"],
            weights=tuple(d["weights"]),
            bias=d["bias"],
            reg_pos=d["reg_pos"],
            reg_neg=d["reg_neg"],
            training_meta=d.get("training_meta", {}),
        )

    @classmethod
    def load(cls, path) -> "LinearModel":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Prediction:
    """Edge probabilities as a dense n x n matrix; the diagonal is unused (0)."""

    p: np.ndarray
    model_id: str = ""


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def class_weights(labels: np.ndarray) -> tuple[float, float]:
    """r+ = n_neg / n_pos and r- = 1."""
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == -1))
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError(f"training data needs both classes (got {n_pos} positive, {n_neg} negative)")
    return n_neg / n_pos, 1.0


def _penalties(labels, reg_pos, reg_neg):
    return np.where(labels == 1, reg_pos, reg_neg)


def svm_loss(w, b, X, labels, reg_pos, reg_neg) -> float:
    margin = labels * (X @ w + b)
    xi = np.maximum(0.0, 1.0 - margin)
    return 0.5 * float(w @ w) + float(np.sum(_penalties(labels, reg_pos, reg_neg) * xi))


def svm_subgradient(w, b, X, labels, reg_pos, reg_neg):
    """A subgradient of svm_loss; the hinge kink itself contributes zero."""
    margin = labels * (X @ w + b)
    coef = np.where(margin < 1.0, -_penalties(labels, reg_pos, reg_neg) * labels, 0.0)
    return w + X.T @ coef, float(np.sum(coef))


def lr_loss(w, b, X, labels, reg_pos, reg_neg) -> float:
    z = X @ w + b
    return 0.5 * float(w @ w) + float(np.sum(_penalties(labels, reg_pos, reg_neg) * np.logaddexp(0.0, -labels * z))) / LN2


def lr_gradient(w, b, X, labels, reg_pos, reg_neg):
    z = X @ w + b
    coef = -_penalties(labels, reg_pos, reg_neg) * labels * sigmoid(-labels * z) / LN2
    return w + X.T @ coef, float(np.sum(coef))


LOSSES = {"svm": (svm_loss, svm_subgradient), "logreg": (lr_loss, lr_gradient)}


def train(
    data: EdgeFeatureMatrix,
    kind: str = "svm",
    epochs: int = 2000,
    seed: int = 0,
    step: float | None = None,
    batch_size: int | None = None,
    reg_pos: float | None = None,
    reg_neg: float | None = None,
    momentum: float = 0.9,
) -> LinearModel:
    """Fit a linear model by (sub)gradient descent and keep the best iterate.

    The objective is divided by reg_neg * n_t so steps do not scale with the
    training set size; this leaves the minimiser unchanged. SVM uses the
    Pegasos schedule 1/(lam t) with lam = 1/(reg_neg n_t); logreg a constant
    step for the first half of the epochs then 1/sqrt decay, with Nesterov
    ``momentum`` (ignored for svm). ``batch_size``
    switches to seeded mini-batches; the full-data loss picks the iterate.
    """
    if kind not in KINDS:
        raise ValueError(f"unsupported model kind {kind!r}; choose from {KINDS}")
    if data.labels is None:
        raise DegenerateLabelsError("training data is unlabelled")
    X = np.asarray(data.X, dtype=float)
    labels = np.asarray(data.labels, dtype=float)
    if X.ndim != 2 or X.shape[1] != N_FEATURES:
        raise ValueError(f"expected {N_FEATURES} features, got shape {X.shape}")
    auto_pos, auto_neg = class_weights(labels)
    reg_pos = auto_pos if reg_pos is None else float(reg_pos)
    reg_neg = auto_neg if reg_neg is None else float(reg_neg)
    n_t = len(labels)
    scale = 1.0 / (reg_neg * n_t)
    loss_fn, grad_fn = LOSSES[kind]
    rng = np.random.default_rng(seed)

    if kind == "logreg" and step is None:
        # curvature bound of the scaled objective
        r_mean = float(np.mean(_penalties(labels, reg_pos, reg_neg))) / reg_neg
        feat_sq = float(np.max(np.sum(X * X, axis=1))) + 1.0
        step = 1.0 / (scale + r_mean * feat_sq / (4.0 * LN2))
    lam = scale

    w = np.zeros(N_FEATURES)
    b = 0.0
    vw = np.zeros(N_FEATURES)
    vb = 0.0
    mu = momentum if kind == "logreg" else 0.0
    best_w, best_b = w.copy(), b
    best_loss = loss_fn(w, b, X, labels, reg_pos, reg_neg)
    initial_loss = best_loss
    for t in range(1, epochs + 1):
        # look-ahead point for Nesterov; equals (w, b) when mu = 0
        aw, ab = w + mu * vw, b + mu * vb
        if batch_size is not None and batch_size < n_t:
            idx = rng.choice(n_t, size=batch_size, replace=False)
            gw, gb = grad_fn(aw, ab, X[idx], labels[idx], reg_pos, reg_neg)
            # rescale the data term to the full set; the w term is not per sample
            gw = aw + (gw - aw) * (n_t / batch_size)
            gb = gb * (n_t / batch_size)
        else:
            gw, gb = grad_fn(aw, ab, X, labels, reg_pos, reg_neg)
        if kind == "svm":
            eta = (step if step is not None else 1.0) / (lam * t)
        else:
            half = max(1, epochs // 2)
            eta = step if t <= half else step / np.sqrt(t - half + 1)
        vw = mu * vw - eta * scale * gw
        vb = mu * vb - eta * scale * gb
        w = w + vw
        b = b + vb
        cur = loss_fn(w, b, X, labels, reg_pos, reg_neg)
        if not np.isfinite(cur):
            raise DivergenceError(f"{kind} loss became non-finite at epoch {t} with step size {eta:g}")
        if cur < best_loss:
            best_loss, best_w, best_b = cur, w.copy(), b
    log.info("%s trained: loss %.6g -> %.6g over %d epochs", kind, initial_loss, best_loss, epochs)
    return LinearModel(
        kind=kind,
        weights=tuple(best_w),
        bias=best_b,
        reg_pos=reg_pos,
        reg_neg=reg_neg,
        training_meta={"epochs": int(epochs), "seed": int(seed), "momentum": float(mu), "final_loss": float(best_loss),
                       "initial_loss": float(initial_loss), "n_train": int(n_t)},
    )


def decision(model: LinearModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != N_FEATURES:
        raise ValueError(f"expected {N_FEATURES} features, got shape {X.shape}")
    return X @ model.w + model.bias


def predict_proba(model: LinearModel, X: np.ndarray) -> np.ndarray:
    return sigmoid(decision(model, X))


def predict(model: LinearModel, feats: EdgeFeatureMatrix) -> Prediction:
    """Per-edge probabilities for a single instance's feature matrix."""
    if feats.n <= 0:
        raise ValueError("predict needs a single-instance feature matrix; use predict_proba for stacked rows")
    p = np.zeros((feats.n, feats.n))
    p[feats.i, feats.j] = predict_proba(model, feats.X)
    return Prediction(p=p, model_id=model.model_id)


def evaluate(model: LinearModel, data: EdgeFeatureMatrix) -> dict:
    """Confusion-matrix metrics with an edge called positive when p > 0.5."""
    if data.labels is None:
        raise ValueError("evaluate needs labelled data")
    pred = predict_proba(model, data.X) > 0.5
    truth = data.labels == 1
    tp = int(np.sum(pred & truth))
    tn = int(np.sum(~pred & ~truth))
    n_pos = int(truth.sum())
    n_neg = len(truth) - n_pos
    recall = tp / n_pos if n_pos else float("nan")
    specificity = tn / n_neg if n_neg else float("nan")
    return {
        "accuracy": (tp + tn) / len(truth),
        "balanced_accuracy": float(np.nanmean([recall, specificity])),
        "positive_recall": recall,
    }
