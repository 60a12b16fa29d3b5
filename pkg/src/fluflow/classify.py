"""Linear soft-margin SVM trained by averaged stochastic subgradient descent.

Used as a sanity check on matrix completion: a panel completed well
should let a linear classifier separate development status at least as
well as the raw zero-filled panel does.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .completion import CompletionResult
from .rng import stream_rng


@dataclass(frozen=True)
class LinearModel:
    """Hyperplane sign(w . x - b), with the training objective recorded."""

    w: np.ndarray
    b: float
    lam: float
    objective: float
    history: tuple  # objective of the averaged iterate after each epoch

    def __post_init__(self):
        w = np.array(self.w, dtype=float)
        if w.ndim != 1:
            raise ShapeError("w must be a vector")
        if not (np.all(np.isfinite(w)) and np.isfinite(self.b)):
            raise DomainError("non-finite model parameter")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)


def svm_objective(w, b, X, y, lam):
    """Mean hinge loss plus lam * ||w||^2."""
    margins = y * (X @ w - b)
    hinge = np.maximum(0.0, 1.0 - margins)
    return float(hinge.mean() + lam * float(w @ w))


def train_svm(X, y, lam, epochs=200, seed=0):
    """Minimize mean hinge loss + lam * ||w||^2 by subgradient descent.

    One pass visits every sample in a seed-determined shuffled order with
    step size 1 / (2 lam t), projecting onto the ball of radius
    1 / sqrt(lam) that must contain the optimum; the returned model is
    the average of all iterates.  The bias rides along as an extra
    regularized coordinate on a constant input column, which keeps the
    objective strongly convex in every direction.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ShapeError("X must be (n_samples, n_features) matching y")
    if not np.all(np.isfinite(X)):
        raise DomainError("non-finite training value")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise DomainError("labels must be +1 or -1")
    if np.all(y == y[0]):
        raise DomainError("both classes must be present")
    if lam <= 0:
        raise DomainError("lam must be positive")
    if epochs < 1:
        raise DomainError("epochs must be at least 1")

    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    rng = stream_rng(seed, "svm")
    w = np.zeros(d + 1)
    w_sum = np.zeros(d + 1)
    radius = 1.0 / math.sqrt(lam)
    t = 0
    history = []
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (2.0 * lam * t)
            if y[i] * (Xa[i] @ w) < 1.0:
                w = (1.0 - 1.0 / t) * w + eta * y[i] * Xa[i]
            else:
                w = (1.0 - 1.0 / t) * w
            norm = float(np.linalg.norm(w))
            if norm > radius:
                w = w * (radius / norm)
            w_sum += w
        w_bar = w_sum / t
        history.append(svm_objective(w_bar[:d], -float(w_bar[d]), X, y, lam))
    w_bar = w_sum / t
    return LinearModel(w_bar[:d], -float(w_bar[d]), float(lam), history[-1], tuple(history))


def accuracy(model, X, y):
    """Fraction of correct sign predictions; sign(0) counts as +1."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ShapeError("X must be (n_samples, n_features) matching y")
    if y.size == 0:
        raise DomainError("cannot score an empty sample")
    if X.shape[1] != model.w.size:
        raise ShapeError("feature width %d does not match model width %d" % (X.shape[1], model.w.size))
    scores = X @ model.w - model.b
    preds = np.where(scores >= 0, 1.0, -1.0)
    return float(np.mean(preds == y))


def completion_consistency_check(raw_panel, completed, labels, lam, epochs=300, seed=0, threshold=0.9):
    """Train twin SVMs on raw zero-filled vs completed data and compare.

    raw_panel should already be standardized, so zero-filling its missing
    entries means imputing the column mean.  Passes when the completed
    arm reaches the accuracy threshold and is no worse than the raw arm.
    Returns (acc_raw, acc_completed, passed).
    """
    if raw_panel.regions != labels.regions:
        raise ShapeError("panel and labels disagree on regions")
    if isinstance(completed, CompletionResult):
        completed_values = completed.completed
    else:
        completed_values = np.asarray(completed, dtype=float)
    if completed_values.shape != raw_panel.shape:
        raise ShapeError("completed matrix shape does not match the panel")

    X_raw = np.where(raw_panel.mask, raw_panel.values, 0.0)
    y = labels.y.astype(float)
    model_raw = train_svm(X_raw, y, lam, epochs=epochs, seed=seed)
    model_comp = train_svm(completed_values, y, lam, epochs=epochs, seed=seed)
    acc_raw = accuracy(model_raw, X_raw, y)
    acc_comp = accuracy(model_comp, completed_values, y)
    passed = acc_comp >= threshold and acc_comp >= acc_raw
    return acc_raw, acc_comp, passed
