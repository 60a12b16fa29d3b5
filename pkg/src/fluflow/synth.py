"""Synthetic worlds with known ground truth.

Generators plant structure (rank, period, intrinsic dimension, feature
weights, flow kernels) that downstream algorithms are supposed to
recover, so tests can score estimates against stored truth rather than
against copies of the implementation.  The planted fixed point is solved
with the same damped iteration the prediction path uses, so generator
and estimator cannot drift apart.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericError
from .data import (
    FeatureMatrix,
    FlowPair,
    IndicatorPanel,
    KernelCoefficients,
    LabelVector,
    MortalityVector,
    WeeklySeries,
    normalize_flows,
)
from .regress import flow_kernel_matrix, predict_fixed_point
from .rng import stream_rng


def region_codes(n):
    """Deterministic three-letter codes AAA, AAB, ..."""
    if n > 26**3:
        raise DomainError("at most %d region codes are available" % 26**3)
    codes = []
    for i in range(n):
        a, rem = divmod(i, 26 * 26)
        b, c = divmod(rem, 26)
        codes.append(chr(65 + a) + chr(65 + b) + chr(65 + c))
    return tuple(codes)


def indicator_names(d):
    return tuple("ind_%04d" % j for j in range(d))


# ===================================================================
# low-rank panels
# ===================================================================

def gen_low_rank(n, d, rank, obs_frac, noise_sigma, seed):
    """Random rank-`rank` matrix with Bernoulli(obs_frac) observations.

    Returns (panel, full_matrix); full_matrix is the noiseless ground
    truth before masking, kept for scoring completions.
    """
    if n < 2 or d < 1:
        raise DomainError("need n >= 2 and d >= 1")
    if rank < 0 or rank > min(n, d):
        raise DomainError("rank must lie in 0..min(n, d)")
    if not 0.0 < obs_frac <= 1.0:
        raise DomainError("obs_frac must lie in (0, 1]")
    if noise_sigma < 0:
        raise DomainError("noise_sigma must be non-negative")
    rng = stream_rng(seed, "low-rank")
    if rank == 0:
        full = np.zeros((n, d))
    else:
        U = rng.standard_normal((n, rank))
        V = rng.standard_normal((d, rank))
        full = U @ V.T
    values = full.copy()
    if noise_sigma > 0:
        values = values + noise_sigma * rng.standard_normal((n, d))
    mask = rng.random((n, d)) < obs_frac if obs_frac < 1.0 else np.ones((n, d), dtype=bool)
    panel = IndicatorPanel(region_codes(n), indicator_names(d), np.where(mask, values, 0.0), mask)
    return panel, full


# ===================================================================
# periodic series
# ===================================================================

def gen_periodic_series(n_weeks, period, amplitude, noise_sigma, seed, region="GLB"):
    """Sinusoid of the given period plus offset and Gaussian noise, clipped at 0.

    The offset keeps the series positive, so clipping almost never fires;
    the planted frequency bin is n_weeks / period when that is an integer.
    """
    if n_weeks < 4:
        raise DomainError("n_weeks must be at least 4")
    if period <= 0:
        raise DomainError("period must be positive")
    if amplitude < 0 or noise_sigma < 0:
        raise DomainError("amplitude and noise_sigma must be non-negative")
    rng = stream_rng(seed, "periodic")
    weeks = np.arange(n_weeks)
    offset = amplitude + 4.0 * noise_sigma + 1.0
    activity = offset + amplitude * np.sin(2.0 * np.pi * weeks / period)
    if noise_sigma > 0:
        activity = activity + noise_sigma * rng.standard_normal(n_weeks)
    activity = np.maximum(activity, 0.0)
    return WeeklySeries(region, weeks, activity)


# ===================================================================
# nonlinear manifolds
# ===================================================================

def _monomial_lift(latent, strength):
    """Columns: linear terms, then scaled squares, cubes and cross terms."""
    cols = [latent]
    if strength > 0:
        k = latent.shape[1]
        cols.append(strength * latent**2)
        cols.append(strength * latent**3)
        cross = [strength * latent[:, i] * latent[:, j] for i in range(k) for j in range(i + 1, k)]
        if cross:
            cols.append(np.column_stack(cross))
    return np.hstack(cols)


def gen_nonlinear_manifold(n, ambient_d, intrinsic_k, seed, linear=False, strength=1.0):
    """Sample a smooth intrinsic_k-dimensional manifold in ambient_d dims.

    Latent coordinates are uniform on [-1, 1]; the embedding mixes
    polynomial terms of the latent through a random linear map, then
    standardizes every column.  linear=True keeps only the linear terms,
    which makes PCA at k = intrinsic_k exact.
    """
    if intrinsic_k < 1 or intrinsic_k >= ambient_d:
        raise DomainError("need 1 <= intrinsic_k < ambient_d")
    if n < 2:
        raise DomainError("need at least 2 samples")
    rng = stream_rng(seed, "manifold")
    latent = rng.uniform(-1.0, 1.0, size=(n, intrinsic_k))
    lifted = _monomial_lift(latent, 0.0 if linear else strength)
    W = rng.standard_normal((lifted.shape[1], ambient_d)) / math.sqrt(lifted.shape[1])
    X = lifted @ W
    X = X - X.mean(axis=0)
    std = X.std(axis=0)
    if np.any(std == 0):
        raise NumericError("degenerate manifold sample: a column has zero variance")
    return X / std


# ===================================================================
# planted regression worlds
# ===================================================================

@dataclass(frozen=True)
class PlantedWorld:
    """A full synthetic scenario with stored ground truth."""

    panel: IndicatorPanel
    true_codes: np.ndarray
    true_a: np.ndarray
    true_kernel: KernelCoefficients
    flows: FlowPair
    z: MortalityVector            # exact fixed point of the planted system
    z_observed: MortalityVector   # fixed point plus observation noise
    labels: LabelVector
    feature_matrix: FeatureMatrix
    seed: int
    kernel_rescales: int


def _orthonormal_codes(n, k, rng):
    """Mean-zero feature columns, exactly orthogonal, unit sample variance."""
    raw = rng.standard_normal((n, k))
    raw = raw - raw.mean(axis=0)
    Q, _ = np.linalg.qr(raw)
    Q = Q[:, :k]
    # QR of mean-zero columns stays mean-zero; rescale to sample variance 1
    codes = Q * math.sqrt(n - 1)
    for j in range(k):
        peak = int(np.argmax(np.abs(codes[:, j])))
        if codes[peak, j] < 0:
            codes[:, j] = -codes[:, j]
    return codes


def gen_planted_world(
    n,
    d,
    k_features,
    kernel_scale,
    flow_density,
    seed,
    obs_frac=0.85,
    n_active=None,
    z_noise=0.0,
    lift_strength=0.3,
    panel_noise=0.0,
):
    """Build a world where every estimation target is known.

    The mortality vector solves z = B a + M(z) z exactly (residual below
    1e-10); the kernel is halved until the flow map is a clear
    contraction (max row sum of |M| below 0.8) and the number of halvings
    is recorded.  Indicators are a polynomial lift of the latent codes,
    carrying the same information the feature recovery stages look for.
    n_active limits how many feature weights are nonzero; the rest stay
    exactly zero for null-feature tests.
    """
    if n < 8:
        raise DomainError("need at least 8 regions")
    if k_features < 1 or k_features >= n - 1:
        raise DomainError("k_features must lie in 1..n-2")
    if not 0.0 < obs_frac <= 1.0:
        raise DomainError("obs_frac must lie in (0, 1]")
    if not 0.0 <= flow_density <= 1.0:
        raise DomainError("flow_density must lie in [0, 1]")
    if kernel_scale < 0 or z_noise < 0 or panel_noise < 0:
        raise DomainError("scales must be non-negative")
    if n_active is None:
        n_active = k_features
    if not 1 <= n_active <= k_features:
        raise DomainError("n_active must lie in 1..k_features")

    regions = region_codes(n)
    rng_codes = stream_rng(seed, "codes")
    codes = _orthonormal_codes(n, k_features, rng_codes)
    B = FeatureMatrix(regions, np.hstack([np.ones((n, 1)), codes]))

    rng_w = stream_rng(seed, "weights")
    magnitudes = rng_w.uniform(0.5, 1.5, size=k_features)
    signs = np.where(rng_w.random(k_features) < 0.5, -1.0, 1.0)
    feature_w = magnitudes * signs
    feature_w[n_active:] = 0.0
    true_a = np.concatenate([[0.0], feature_w])

    rng_f = stream_rng(seed, "flows")
    def raw_flow():
        gate = rng_f.random((n, n)) < flow_density
        return np.where(gate, rng_f.random((n, n)), 0.0)
    flows = normalize_flows(raw_flow(), raw_flow(), regions)

    rng_k = stream_rng(seed, "kernel")
    kernel_raw = rng_k.uniform(-1.0, 1.0, size=8)
    if kernel_scale > 0:
        # normalize so kernel_scale approximates the max row sum of |M(z)|
        # at the flow-free prediction, i.e. the contraction factor
        base_z = B.B @ true_a
        probe = flow_kernel_matrix(base_z, flows, KernelCoefficients(kernel_raw[:4], kernel_raw[4:]))
        base_row_sum = float(np.max(np.sum(np.abs(probe), axis=1)))
        kernel_raw = (
            kernel_raw * (kernel_scale / base_row_sum) if base_row_sum > 0 else np.zeros(8)
        )
    else:
        kernel_raw = np.zeros(8)
    rescales = 0
    while True:
        kernel = KernelCoefficients(kernel_raw[:4], kernel_raw[4:])
        try:
            zv, _, _ = predict_fixed_point(B, true_a, kernel, flows, tol=1e-13, max_iter=5000)
        except NumericError:
            zv = None
        if zv is not None:
            row_sum = float(np.max(np.sum(np.abs(flow_kernel_matrix(zv, flows, kernel)), axis=1)))
            if row_sum < 0.8:
                break
        rescales += 1
        if rescales > 10:
            raise NumericError("kernel_scale too large: no contraction after 10 halvings")
        kernel_raw = 0.5 * kernel_raw

    residual = zv - (B.B @ true_a + flow_kernel_matrix(zv, flows, kernel) @ zv)
    if float(np.max(np.abs(residual))) > 1e-10:
        raise NumericError("planted fixed point residual exceeds 1e-10")

    z_exact = MortalityVector(regions, zv, np.exp(zv))
    if z_noise > 0:
        noisy = zv + z_noise * stream_rng(seed, "z-noise").standard_normal(n)
        z_obs = MortalityVector(regions, noisy, np.exp(noisy))
    else:
        z_obs = z_exact

    rng_panel = stream_rng(seed, "panel")
    lifted = _monomial_lift(codes, lift_strength)
    W = rng_panel.standard_normal((lifted.shape[1], d)) / math.sqrt(lifted.shape[1])
    values = lifted @ W
    if panel_noise > 0:
        values = values + panel_noise * rng_panel.standard_normal((n, d))
    mask = (
        stream_rng(seed, "mask").random((n, d)) < obs_frac
        if obs_frac < 1.0
        else np.ones((n, d), dtype=bool)
    )
    panel = IndicatorPanel(regions, indicator_names(d), np.where(mask, values, 0.0), mask)

    y = np.where(codes[:, 0] >= 0, 1, -1)
    if np.all(y == y[0]):
        raise NumericError("degenerate label draw: one class is empty")
    labels = LabelVector(regions, y)

    return PlantedWorld(
        panel=panel,
        true_codes=codes,
        true_a=true_a,
        true_kernel=kernel,
        flows=flows,
        z=z_exact,
        z_observed=z_obs,
        labels=labels,
        feature_matrix=B,
        seed=seed,
        kernel_rescales=rescales,
    )
