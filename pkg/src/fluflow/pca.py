"""Principal component analysis by power iteration with deflation.

Components are extracted one at a time: power iteration finds the
leading direction of the deflated data matrix, the captured variance is
removed, and the next component is sought in what remains.  The result
matches a direct SVD to tight tolerance while keeping the extraction
order explicit, which the feature-attribution step relies on.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericError, ShapeError
from .encode import encoder_jacobians
from .rng import stream_rng

_START_SEED = 744812  # fixed key for power-iteration start vectors

POWER_MAX_STEPS = 10_000
POWER_TOL = 1e-13


@dataclass(frozen=True)
class PcaModel:
    """Rows of components are unit-norm directions in input space."""

    components: np.ndarray
    explained_variance: np.ndarray
    mean: np.ndarray

    def __post_init__(self):
        comps = np.array(self.components, dtype=float)
        ev = np.array(self.explained_variance, dtype=float)
        mean = np.array(self.mean, dtype=float)
        if comps.ndim != 2 or ev.shape != (comps.shape[0],) or mean.shape != (comps.shape[1],):
            raise ShapeError("components, explained_variance and mean disagree on shape")
        for arr in (comps, ev, mean):
            if not np.all(np.isfinite(arr)):
                raise DomainError("non-finite PCA parameter")
            arr.setflags(write=False)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "explained_variance", ev)
        object.__setattr__(self, "mean", mean)

    @property
    def n_components(self):
        return self.components.shape[0]


def _fix_sign(w):
    peak = int(np.argmax(np.abs(w)))
    return -w if w[peak] < 0 else w


def _power_iteration(Xk, start):
    """Leading right singular direction of Xk via v <- Xk.T Xk v."""
    v = start / np.linalg.norm(start)
    for _ in range(POWER_MAX_STEPS):
        u = Xk @ v
        w = Xk.T @ u
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return v  # deflated matrix is numerically zero along every direction
        w = w / norm
        if w @ v < 0:
            w = -w
        if np.linalg.norm(w - v) < POWER_TOL:
            return w
        v = w
    raise NumericError("power iteration did not converge in %d steps" % POWER_MAX_STEPS)


def fit_pca(X, k):
    """Extract k components from the rows of X by deflation.

    Each component has unit norm and its largest-magnitude entry
    positive; explained variances are sample variances (ddof=1) along
    each direction and are non-increasing.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ShapeError("fit_pca expects a 2-d matrix")
    n, d = X.shape
    if not 1 <= k <= min(n, d):
        raise ShapeError("k must lie in 1..%d" % min(n, d))
    if not np.all(np.isfinite(X)):
        raise DomainError("non-finite input value")
    if n < 2:
        raise DomainError("need at least 2 rows")
    mean = X.mean(axis=0)
    Xk = X - mean
    comps = np.zeros((k, d))
    ev = np.zeros(k)
    for i in range(k):
        start = stream_rng(_START_SEED, "power", i).standard_normal(d)
        w = _power_iteration(Xk, start)
        # re-orthogonalize against earlier components: pure round-off cleanup
        if i:
            w = w - comps[:i].T @ (comps[:i] @ w)
            norm = np.linalg.norm(w)
            if norm == 0.0:
                raise NumericError("deflated matrix has no variance left for component %d" % (i + 1))
            w = w / norm
        w = _fix_sign(w)
        scores = Xk @ w
        comps[i] = w
        ev[i] = float(scores @ scores) / (n - 1)
        Xk = Xk - np.outer(scores, w)
    return PcaModel(comps, ev, mean)


def transform(model, X):
    """Project rows onto the components: (X - mean) @ components.T."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != model.mean.size:
        raise ShapeError("input width %d does not match model width %d" % (X.shape[1], model.mean.size))
    scores = (X - model.mean) @ model.components.T
    return scores[0] if single else scores


def inverse_transform(model, scores):
    scores = np.asarray(scores, dtype=float)
    single = scores.ndim == 1
    if single:
        scores = scores[None, :]
    if scores.shape[1] != model.n_components:
        raise ShapeError("score width does not match the component count")
    out = scores @ model.components + model.mean
    return out[0] if single else out


def reconstruction_error_curve(X, ks):
    """Mean squared error of the rank-k PCA reconstruction for each k."""
    X = np.asarray(X, dtype=float)
    ks = [int(k) for k in ks]
    if not ks:
        raise DomainError("ks must be non-empty")
    model = fit_pca(X, max(ks))
    scores = transform(model, X)
    errors = []
    for k in ks:
        if k < 1:
            raise DomainError("every k must be at least 1")
        approx = scores[:, :k] @ model.components[:k] + model.mean
        errors.append(float(np.mean((X - approx) ** 2)))
    return errors


def attribute_features(pca_model, autoencoder, X, indicator_names, top_m):
    """Rank indicators by their gradient pull on each PCA feature.

    For every region row the chain rule gives d(score_c)/d(indicator_j)
    through the encoder; the attribution weight is the average absolute
    gradient over regions.  Returns one descending [(name, weight), ...]
    list per component, truncated to top_m entries (top_m=0 gives empty
    lists).  The full attribution matrix is available via
    attribution_matrix for callers that need every indicator.
    """
    rankings = []
    attr = attribution_matrix(pca_model, autoencoder, X)
    if len(indicator_names) != attr.shape[1]:
        raise ShapeError("indicator name count does not match input width")
    if top_m < 0:
        raise DomainError("top_m must be non-negative")
    for c in range(attr.shape[0]):
        order = np.argsort(-attr[c], kind="stable")[:top_m]
        rankings.append([(indicator_names[j], float(attr[c, j])) for j in order])
    return rankings


def attribution_matrix(pca_model, autoencoder, X):
    """Average absolute gradient of each PCA score w.r.t. each input column."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ShapeError("X must be a 2-d matrix")
    jac = encoder_jacobians(autoencoder, X)  # (n, code, d)
    if pca_model.components.shape[1] != jac.shape[1]:
        raise ShapeError("PCA width does not match the encoder bottleneck")
    # d score_c / d x = comp_c @ J(x): contract the code axis
    grads = np.einsum("ck,nkd->ncd", pca_model.components, jac)
    return np.abs(grads).mean(axis=0)
