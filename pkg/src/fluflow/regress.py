"""Mortality regression with an optional cross-region flow correction.

The plain model explains normalized log mortality z from feature columns
by ordinary least squares.  The rectified model adds a bilinear flow
kernel: z_i also receives sum_j M(z)_ij z_j, where M(z) combines
migration and trade matrices weighted by 8 kernel coefficients.  Because
the kernel enters the fit linearly once z is observed, both models solve
as a single least-squares system; prediction for new worlds then solves
the implied fixed point by damped iteration.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConditioningError,
    DomainError,
    NonContractionError,
    NumericError,
    RegionLookupError,
    ShapeError,
)
from .data import FeatureMatrix, FlowPair, KernelCoefficients, MortalityVector
from .rng import stream_rng

COND_LIMIT = 1e10
P_THRESHOLD = 0.05

FLOW_COLUMN_NAMES = (
    "alpha_0", "alpha_1", "alpha_2", "alpha_3",
    "beta_0", "beta_1", "beta_2", "beta_3",
)


# ===================================================================
# Student-t tail probabilities (no statistical library dependency)
# ===================================================================

def _beta_cf(a, b, x):
    # Lentz continued fraction for the regularized incomplete beta
    max_iter = 400
    eps = 1e-16
    fpmin = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        step = d * c
        h *= step
        if abs(step - 1.0) < eps:
            return h
    raise NumericError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a, b, x):
    if a <= 0 or b <= 0:
        raise DomainError("beta parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def t_two_sided_p(t, df):
    """P(|T_df| >= |t|) for a Student-t variable with df degrees of freedom."""
    if df < 1:
        raise DomainError("degrees of freedom must be at least 1")
    t = float(t)
    if not math.isfinite(t):
        return 0.0
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return regularized_incomplete_beta(0.5 * df, 0.5, x)


# ===================================================================
# fit plumbing
# ===================================================================

@dataclass(frozen=True)
class FitResult:
    """Least-squares solution: intercept-first weights a, optional flow
    kernel, residuals, per-feature two-sided p-values, and the residual
    sum of squares."""

    a: np.ndarray
    kernel: KernelCoefficients
    residuals: np.ndarray
    p_values: np.ndarray
    rss: float

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        residuals = np.array(self.residuals, dtype=float)
        p_values = np.array(self.p_values, dtype=float)
        if a.ndim != 1 or residuals.ndim != 1 or p_values.ndim != 1:
            raise ShapeError("fit fields must be vectors")
        if p_values.size != a.size - 1:
            raise ShapeError("one p-value per non-intercept feature column expected")
        if p_values.size and (p_values.min() < 0.0 or p_values.max() > 1.0):
            raise DomainError("p-values must lie in [0, 1]")
        for arr in (a, residuals, p_values):
            arr.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "residuals", residuals)
        object.__setattr__(self, "p_values", p_values)


def _check_conditioning(D, names):
    s = np.linalg.svd(D, compute_uv=False)
    if s[-1] == 0.0 or s[0] / s[-1] >= COND_LIMIT:
        _, R = np.linalg.qr(D)
        offender = int(np.argmin(np.abs(np.diag(R))))
        raise ConditioningError(
            "design matrix condition number %.3g exceeds %.0e; weakest column is '%s'"
            % (float(s[0] / s[-1]) if s[-1] > 0 else math.inf, COND_LIMIT, names[offender])
        )


def _qr_solve(D, y):
    Q, R = np.linalg.qr(D)
    return np.linalg.solve(R, Q.T @ y)


def _design_p_values(D, coeffs, rss, n):
    """Two-sided t-test p-value per non-intercept column of D."""
    df = n - D.shape[1]
    if df < 1:
        raise DomainError("not enough rows for p-values: df = %d" % df)
    sigma2 = rss / df
    gram_inv = np.linalg.inv(D.T @ D)
    var = sigma2 * np.diag(gram_inv)
    p = np.empty(D.shape[1] - 1)
    for j in range(1, D.shape[1]):
        if var[j] <= 0.0:
            # zero residual variance: any nonzero weight is unambiguous
            p[j - 1] = 1.0 if coeffs[j] == 0.0 else 0.0
        else:
            p[j - 1] = t_two_sided_p(coeffs[j] / math.sqrt(var[j]), df)
    return p


def _column_names(fm, flow_cols=()):
    names = ["intercept"] + ["feature_%d" % (j + 1) for j in range(fm.n_features)]
    return names + list(flow_cols)


def ols_fit(B, z):
    """Ordinary least squares of z on the feature columns of B."""
    if not isinstance(B, FeatureMatrix) or not isinstance(z, MortalityVector):
        raise ShapeError("ols_fit expects a FeatureMatrix and a MortalityVector")
    if B.regions != z.regions:
        raise ShapeError("feature matrix and mortality vector disagree on regions")
    n = len(B.regions)
    if n <= B.B.shape[1]:
        raise DomainError("need more regions than design columns")
    _check_conditioning(B.B, _column_names(B))
    a = _qr_solve(B.B, z.z)
    residuals = z.z - B.B @ a
    rss = float(residuals @ residuals)
    p = _design_p_values(B.B, a, rss, n)
    return FitResult(a, KernelCoefficients.zeros(), residuals, p, rss)


# ===================================================================
# flow design
# ===================================================================

@dataclass(frozen=True)
class FlowDesign:
    """Eight regressor columns carrying the flow kernel expansion.

    Column order matches FLOW_COLUMN_NAMES: the four migration terms
    (constant, z_i-, z_j-, z_i z_j-weighted) then the four trade terms.
    """

    regions: tuple
    Phi: np.ndarray

    def __post_init__(self):
        Phi = np.array(self.Phi, dtype=float)
        if Phi.ndim != 2 or Phi.shape != (len(self.regions), 8):
            raise ShapeError("Phi must be (n_regions, 8)")
        if not np.all(np.isfinite(Phi)):
            raise DomainError("non-finite flow design value")
        Phi.setflags(write=False)
        object.__setattr__(self, "regions", tuple(self.regions))
        object.__setattr__(self, "Phi", Phi)


def build_flow_design(z, flows):
    """Expand sum_j M(z)_ij z_j into columns linear in the kernel weights."""
    if not isinstance(z, MortalityVector) or not isinstance(flows, FlowPair):
        raise ShapeError("build_flow_design expects a MortalityVector and a FlowPair")
    if z.regions != flows.regions:
        raise ShapeError("mortality and flows disagree on regions")
    zv = z.z
    z2 = zv * zv
    cols = []
    for mat in (flows.m, flows.t):
        u1 = mat @ zv      # sum_j m_ij z_j
        u2 = mat @ z2      # sum_j m_ij z_j^2
        cols.extend([u1, zv * u1, u2, zv * u2])
    return FlowDesign(z.regions, np.column_stack(cols))


def fit_rectified(B, z, flows):
    """Joint least squares over feature weights and flow kernel.

    Identically zero design columns (for example when a flow matrix is
    all zero) are excluded from the solve and their kernel coefficient
    pinned to 0, so a zero-flow world reduces exactly to ols_fit.
    """
    if B.regions != z.regions:
        raise ShapeError("feature matrix and mortality vector disagree on regions")
    design = build_flow_design(z, flows)
    norms = np.linalg.norm(design.Phi, axis=0)
    live = np.nonzero(norms > 0.0)[0]
    D = np.hstack([B.B, design.Phi[:, live]])
    n = len(B.regions)
    if n <= D.shape[1]:
        raise DomainError("need more regions than design columns")
    names = _column_names(B, [FLOW_COLUMN_NAMES[j] for j in live])
    _check_conditioning(D, names)
    coeffs = _qr_solve(D, z.z)
    n_b = B.B.shape[1]
    a = coeffs[:n_b]
    kappa = np.zeros(8)
    kappa[live] = coeffs[n_b:]
    residuals = z.z - D @ coeffs
    rss = float(residuals @ residuals)
    p_all = _design_p_values(D, coeffs, rss, n)
    p = p_all[: n_b - 1]
    kernel = KernelCoefficients(kappa[:4], kappa[4:])
    return FitResult(a, kernel, residuals, p, rss)


def p_values(fit, B, z, flows=None):
    """Recompute per-feature p-values for a fit on (B, z[, flows])."""
    if B.regions != z.regions:
        raise ShapeError("feature matrix and mortality vector disagree on regions")
    if flows is not None and fit.kernel.max_abs() > 0.0:
        design = build_flow_design(z, flows)
        norms = np.linalg.norm(design.Phi, axis=0)
        live = np.nonzero(norms > 0.0)[0]
        D = np.hstack([B.B, design.Phi[:, live]])
        coeffs = np.concatenate([fit.a, np.concatenate([fit.kernel.alpha, fit.kernel.beta])[live]])
    else:
        D = B.B
        coeffs = fit.a
    p_all = _design_p_values(D, coeffs, fit.rss, len(B.regions))
    return p_all[: B.B.shape[1] - 1]


# ===================================================================
# fixed-point prediction
# ===================================================================

def flow_kernel_matrix(zv, flows, kernel):
    """M(z)_ij = (a0 + a1 z_i + a2 z_j + a3 z_i z_j) m_ij + trade analogue."""
    zi = zv[:, None]
    zj = zv[None, :]
    a = kernel.alpha
    b = kernel.beta
    mig = (a[0] + a[1] * zi + a[2] * zj + a[3] * zi * zj) * flows.m
    trd = (b[0] + b[1] * zi + b[2] * zj + b[3] * zi * zj) * flows.t
    return mig + trd


def predict_fixed_point(B, a, kernel, flows, z0=None, damping=0.5, tol=1e-10, max_iter=1000):
    """Solve z = B a + M(z) z by damped iteration.

    Returns (z, iterations, rho) where rho is the spectral radius of
    M(z) at the solution, reported for an a-posteriori contraction
    check.  Divergence or failure to converge raises
    NonContractionError carrying the last iterate norm.
    """
    if not isinstance(B, FeatureMatrix) or not isinstance(flows, FlowPair):
        raise ShapeError("predict_fixed_point expects a FeatureMatrix and a FlowPair")
    if B.regions != flows.regions:
        raise ShapeError("features and flows disagree on regions")
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.size != B.B.shape[1]:
        raise ShapeError("weight vector length does not match the feature matrix")
    if not 0.0 < damping <= 1.0:
        raise DomainError("damping must lie in (0, 1]")
    base = B.B @ a
    z = base.copy() if z0 is None else np.asarray(z0, dtype=float).reshape(-1).copy()
    if z.size != base.size:
        raise ShapeError("z0 length does not match the region count")
    for it in range(1, max_iter + 1):
        target = base + flow_kernel_matrix(z, flows, kernel) @ z
        z_new = (1.0 - damping) * z + damping * target
        norm = float(np.max(np.abs(z_new)))
        if not np.all(np.isfinite(z_new)) or norm > 1e8:
            raise NonContractionError(
                "fixed-point iteration diverged at step %d (max |z| = %.3g)" % (it, norm)
            )
        delta = float(np.max(np.abs(z_new - z)))
        z = z_new
        if delta < tol:
            rho = float(np.max(np.abs(np.linalg.eigvals(flow_kernel_matrix(z, flows, kernel)))))
            return z, it, rho
    raise NonContractionError(
        "fixed-point iteration did not reach tol %.1e in %d steps (last max |z| = %.3g)"
        % (tol, max_iter, float(np.max(np.abs(z))))
    )


# ===================================================================
# feature selection, contributions
# ===================================================================

@dataclass(frozen=True)
class SelectionResult:
    kept: tuple          # indices into the original feature columns (0-based)
    B: FeatureMatrix     # reduced design
    fit: FitResult       # refit on the reduced design
    note: str = ""


def select_features(fit, B, z, flows=None, threshold=P_THRESHOLD):
    """Drop features with p > threshold and refit; intercept always stays.

    When every feature is rejected the result is an intercept-only fit
    and the note records the event instead of raising.
    """
    if fit.p_values.size != B.n_features:
        raise ShapeError("fit p-values do not match the feature matrix width")
    kept = tuple(int(j) for j in range(B.n_features) if fit.p_values[j] <= threshold)
    note = ""
    cols = [0] + [j + 1 for j in kept]
    reduced = FeatureMatrix(B.regions, B.B[:, cols])
    if not kept:
        note = "all features rejected at threshold %.3g; intercept-only fit" % threshold
        a = np.array([float(z.z.mean())])
        residuals = z.z - a[0]
        refit = FitResult(a, KernelCoefficients.zeros(), residuals, np.empty(0), float(residuals @ residuals))
        return SelectionResult(kept, reduced, refit, note)
    if flows is not None:
        refit = fit_rectified(reduced, z, flows)
    else:
        refit = ols_fit(reduced, z)
    return SelectionResult(kept, reduced, refit, note)


def region_contributions(fit, B, regions):
    """Per-region standardized feature values behind a fitted weight vector.

    B should be the design the fit was computed on (post-selection), so
    contribution[r][j] is region r's standing on surviving feature j.
    """
    if fit.a.size != B.B.shape[1]:
        raise ShapeError("fit width does not match the feature matrix")
    out = {}
    for code in regions:
        idx = B.region_index(code)
        out[code] = B.B[idx, 1:].copy()
    return out


def match_features(base_attr, pert_attr, ambiguity_gap=0.05):
    """Match feature rows of two attribution matrices by cosine similarity.

    Returns a list over base rows of (best_index, cosine, ambiguous);
    ambiguous is set when the runner-up cosine lies within ambiguity_gap
    of the best, meaning the match cannot be trusted.
    """
    base = np.asarray(base_attr, dtype=float)
    pert = np.asarray(pert_attr, dtype=float)
    if base.ndim != 2 or pert.ndim != 2 or base.shape[1] != pert.shape[1]:
        raise ShapeError("attribution matrices must share the indicator axis")
    def rows_unit(M):
        norms = np.linalg.norm(M, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        return M / norms
    cos = np.abs(rows_unit(base) @ rows_unit(pert).T)
    matches = []
    for i in range(base.shape[0]):
        order = np.argsort(-cos[i], kind="stable")
        best = int(order[0])
        ambiguous = False
        if order.size > 1:
            ambiguous = bool(cos[i, best] - cos[i, int(order[1])] < ambiguity_gap)
        matches.append((best, float(cos[i, best]), ambiguous))
    return matches


# ===================================================================
# bootstrap model comparison
# ===================================================================

@dataclass(frozen=True)
class BootstrapSummary:
    mean: float
    std: float
    samples: np.ndarray

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def stderr(self):
        return float(self.std / math.sqrt(self.samples.size)) if self.samples.size else math.inf


@dataclass(frozen=True)
class BootstrapResult:
    plain: BootstrapSummary
    rectified: BootstrapSummary
    skipped: int


def bootstrap_cv(B, z, flows, n_boot=200, seed=0):
    """Out-of-bag comparison of the plain and rectified models.

    Each replicate resamples regions with replacement, fits both models
    on the in-bag rows (flow regressors are treated as fixed per-region
    covariates), and scores mean squared prediction error on the
    out-of-bag rows.  Replicates draw from independent streams keyed by
    (seed, replicate), so results do not depend on evaluation order.
    An empty out-of-bag set skips the replicate and counts it.
    """
    if n_boot < 100:
        raise DomainError("n_boot must be at least 100")
    if B.regions != z.regions:
        raise ShapeError("feature matrix and mortality vector disagree on regions")
    design = build_flow_design(z, flows)
    norms = np.linalg.norm(design.Phi, axis=0)
    live = np.nonzero(norms > 0.0)[0]
    D_plain = B.B
    D_rect = np.hstack([B.B, design.Phi[:, live]])
    zv = z.z
    n = zv.size
    mse_plain, mse_rect = [], []
    skipped = 0
    for rep in range(n_boot):
        rng = stream_rng(seed, "bootstrap", rep)
        idx = rng.integers(0, n, size=n)
        oob = np.setdiff1d(np.arange(n), idx)
        if oob.size == 0:
            skipped += 1
            continue
        a_p = _qr_solve(D_plain[idx], zv[idx])
        a_r = _qr_solve(D_rect[idx], zv[idx])
        err_p = zv[oob] - D_plain[oob] @ a_p
        err_r = zv[oob] - D_rect[oob] @ a_r
        mse_plain.append(float(np.mean(err_p**2)))
        mse_rect.append(float(np.mean(err_r**2)))
    mse_plain = np.array(mse_plain)
    mse_rect = np.array(mse_rect)
    return BootstrapResult(
        plain=BootstrapSummary(float(mse_plain.mean()), float(mse_plain.std(ddof=1)), mse_plain),
        rectified=BootstrapSummary(float(mse_rect.mean()), float(mse_rect.std(ddof=1)), mse_rect),
        skipped=skipped,
    )
