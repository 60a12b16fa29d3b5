"""Acceptance suite: one test per shipped guarantee.

Every test exercises a planted-truth world or an independent oracle,
prints a single verdict line, and enforces the runtime budget it was
designed under.  Run with -s to see the verdict table.
"""

import math
import time

import numpy as np
import scipy.stats

from fluflow.classify import completion_consistency_check
from fluflow.cli import main
from fluflow.completion import CompletionConfig, soft_impute
from fluflow.data import (
    FeatureMatrix,
    FlowPair,
    KernelCoefficients,
    MortalityVector,
    standardize_columns,
)
from fluflow.encode import (
    init_parameters,
    loss_and_gradients,
    reconstruction_loss,
    select_bottleneck,
    train_autoencoder,
    AutoencoderSpec,
    geometric_layer_schedule,
)
from fluflow.pca import fit_pca, reconstruction_error_curve
from fluflow.pipeline import FeatureParams, PipelineConfig, load_manifest, robustness_test
from fluflow.regress import (
    bootstrap_cv,
    build_flow_design,
    fit_rectified,
    ols_fit,
    select_features,
)
from fluflow.rng import stream_rng
from fluflow.spectral import dft, dft_values, dominant_period
from fluflow.synth import (
    gen_low_rank,
    gen_nonlinear_manifold,
    gen_periodic_series,
    gen_planted_world,
)
from tests.helpers import class_world


def _verdict(num, label, ok, elapsed, budget):
    print("acceptance %02d %s  %s (%.1fs of %ds)"
          % (num, "pass" if ok else "FAIL", label, elapsed, budget))


def test_01_completion_recovers_planted_low_rank():
    t0 = time.time()
    panel, full = gen_low_rank(100, 200, rank=5, obs_frac=0.3, noise_sigma=0.0, seed=0)
    result = soft_impute(panel)
    rel = np.linalg.norm(result.completed - full) / np.linalg.norm(full)
    ok = rel < 1e-2 and result.rank == 5
    elapsed = time.time() - t0
    _verdict(1, "completion recovers a rank-5 panel from 30% coverage", ok, elapsed, 30)
    assert ok
    assert elapsed < 30


def test_02_classification_consistent_after_completion():
    t0 = time.time()
    wins = 0
    for seed in range(5):
        panel, labels = class_world(seed=seed)
        std = standardize_columns(panel)
        res = soft_impute(std.panel, CompletionConfig(max_rank=3))
        acc_raw, acc_comp, _ = completion_consistency_check(std.panel, res, labels, 0.01)
        wins += acc_comp >= 0.9 and acc_comp >= acc_raw
    ok = wins >= 3
    elapsed = time.time() - t0
    _verdict(2, "completed panel classifies at least as well as zero-fill", ok, elapsed, 10)
    assert ok
    assert elapsed < 10


def test_03_yearly_period_found_in_noisy_series():
    t0 = time.time()
    ok = True
    for seed in range(20):
        series = gen_periodic_series(260, 52, amplitude=1.0, noise_sigma=0.3, seed=seed)
        period, peak_k, ratio = dominant_period(dft(series))
        ok = ok and peak_k == 5 and period == 52 and ratio > 3
    elapsed = time.time() - t0
    _verdict(3, "52-week cycle lands in bin 5 with a clear peak", ok, elapsed, 1)
    assert ok
    assert elapsed < 1


def test_04_transform_parseval_and_linearity():
    t0 = time.time()
    rng = stream_rng(0, "acceptance-dft")
    series = [rng.standard_normal(int(rng.integers(16, 200))) for _ in range(100)]
    ok = True
    for x in series:
        spec = dft_values(x)
        lhs = np.sum(np.abs(x) ** 2)
        rhs = np.sum(np.abs(spec.coefficients) ** 2) / spec.n
        ok = ok and abs(lhs - rhs) < 1e-9 * max(lhs, 1.0)
    for x, y in zip(series[0::2], series[1::2]):
        m = min(x.size, y.size)
        a, b = 2.5, -1.25
        lhs = dft_values(a * x[:m] + b * y[:m]).coefficients
        rhs = a * dft_values(x[:m]).coefficients + b * dft_values(y[:m]).coefficients
        scale = np.abs(rhs).max()
        ok = ok and np.allclose(lhs, rhs, atol=1e-9 * scale)
    elapsed = time.time() - t0
    _verdict(4, "transform obeys Parseval and linearity to 1e-9", ok, elapsed, 1)
    assert ok
    assert elapsed < 1


def test_05_autoencoder_gradients_match_central_differences():
    t0 = time.time()
    sizes = (8, 5, 3)
    rng = stream_rng(0, "gradcheck")
    X = rng.standard_normal((5, 8))
    weights, biases = init_parameters(sizes, seed=1)
    for b in biases:
        b += 0.2 * rng.standard_normal(b.shape)
    _, g_w, g_b = loss_and_gradients(sizes, weights, biases, X)
    h = 1e-5

    def numeric(param, idx):
        orig = param[idx]
        param[idx] = orig + h
        up = reconstruction_loss(sizes, weights, biases, X)
        param[idx] = orig - h
        down = reconstruction_loss(sizes, weights, biases, X)
        param[idx] = orig
        return (up - down) / (2 * h)

    worst = 0.0
    for l in range(len(weights)):
        for idx in np.ndindex(weights[l].shape):
            fd = numeric(weights[l], idx)
            scale = max(abs(fd), abs(g_w[l][idx]), 1e-8)
            worst = max(worst, abs(fd - g_w[l][idx]) / scale)
        for idx in np.ndindex(biases[l].shape):
            fd = numeric(biases[l], idx)
            scale = max(abs(fd), abs(g_b[l][idx]), 1e-8)
            worst = max(worst, abs(fd - g_b[l][idx]) / scale)
    ok = worst < 1e-5
    elapsed = time.time() - t0
    _verdict(5, "analytic gradients match central differences", ok, elapsed, 5)
    assert ok
    assert elapsed < 5


def test_06_autoencoder_beats_pca_on_curved_manifold():
    t0 = time.time()
    ks = (1, 2, 3, 4, 5, 6)
    ae_err = {k: [] for k in ks}
    pca_err = {k: [] for k in ks}
    for seed in range(5):
        X = gen_nonlinear_manifold(240, 30, 3, seed=seed)
        for k, err in zip(ks, reconstruction_error_curve(X, ks)):
            pca_err[k].append(err)
        for k in ks:
            spec = AutoencoderSpec(geometric_layer_schedule(30, k, 1), seed=seed)
            ae_err[k].append(train_autoencoder(X, spec).final_loss)
    ok = all(np.median(ae_err[k]) < np.median(pca_err[k]) for k in ks)
    elapsed = time.time() - t0
    _verdict(6, "autoencoder beats PCA at every width on a curved manifold", ok, elapsed, 300)
    assert ok
    assert elapsed < 300


def test_07_bottleneck_selection_finds_planted_dimension():
    t0 = time.time()
    hits = 0
    for seed in range(5):
        X = gen_nonlinear_manifold(240, 30, 3, seed=seed, linear=True)
        best, _ = select_bottleneck(X, (1, 2, 3, 4, 5, 6), seed=seed)
        hits += best == 3
    ok = hits >= 3
    elapsed = time.time() - t0
    _verdict(7, "information criterion picks the planted width 3", ok, elapsed, 600)
    assert ok
    assert elapsed < 600


def test_08_deflation_matches_direct_svd():
    t0 = time.time()
    ok = True
    for case in range(50):
        rng = stream_rng(case, "acceptance-pca")
        n = int(rng.integers(20, 40))
        d = int(rng.integers(3, 9))
        X = rng.standard_normal((n, d))
        model = fit_pca(X, d)
        centered = X - X.mean(axis=0)
        _, _, Vt = np.linalg.svd(centered, full_matrices=False)
        for i in range(d):
            gap = min(np.max(np.abs(model.components[i] - Vt[i])),
                      np.max(np.abs(model.components[i] + Vt[i])))
            ok = ok and gap < 1e-8
    elapsed = time.time() - t0
    _verdict(8, "deflation components equal direct SVD up to sign", ok, elapsed, 10)
    assert ok
    assert elapsed < 10


def _flow_sum_oracle(zv, m, t, kernel):
    n = zv.size
    a, b = kernel.alpha, kernel.beta
    out = np.zeros(n)
    for i in range(n):
        for j in range(n):
            mij = (a[0] + a[1] * zv[i] + a[2] * zv[j] + a[3] * zv[i] * zv[j]) * m[i, j]
            tij = (b[0] + b[1] * zv[i] + b[2] * zv[j] + b[3] * zv[i] * zv[j]) * t[i, j]
            out[i] += (mij + tij) * zv[j]
    return out


def test_09_flow_design_matches_double_loop():
    t0 = time.time()
    ok = True
    for case in range(100):
        rng = stream_rng(case, "acceptance-design")
        n = int(rng.integers(2, 9))
        regions = tuple("R%03d" % i for i in range(n))
        m = rng.uniform(0, 1, (n, n)) * (rng.uniform(0, 1, (n, n)) < 0.5)
        t = rng.uniform(0, 1, (n, n)) * (rng.uniform(0, 1, (n, n)) < 0.5)
        np.fill_diagonal(m, 0.0)
        np.fill_diagonal(t, 0.0)
        flows = FlowPair(regions, m, t)
        z = MortalityVector(regions, rng.standard_normal(n), np.ones(n))
        kernel = KernelCoefficients(rng.standard_normal(4), rng.standard_normal(4))
        design = build_flow_design(z, flows)
        combo = design.Phi @ np.concatenate([kernel.alpha, kernel.beta])
        oracle = _flow_sum_oracle(z.z, m, t, kernel)
        ok = ok and np.max(np.abs(combo - oracle)) < 1e-12
    elapsed = time.time() - t0
    _verdict(9, "kernel design expansion equals the double loop", ok, elapsed, 1)
    assert ok
    assert elapsed < 1


def test_10_joint_fit_recovers_planted_coefficients():
    t0 = time.time()
    ok = True
    for z_noise, tol in ((0.0, 1e-6), (0.01, 0.05)):
        w = gen_planted_world(n=183, d=20, k_features=6, kernel_scale=0.3,
                              flow_density=0.3, seed=0, z_noise=z_noise)
        fit = fit_rectified(w.feature_matrix, w.z_observed, w.flows)
        kappa_hat = np.concatenate([fit.kernel.alpha, fit.kernel.beta])
        kappa_true = np.concatenate([w.true_kernel.alpha, w.true_kernel.beta])
        ok = ok and np.max(np.abs(fit.a - w.true_a)) < tol
        ok = ok and np.max(np.abs(kappa_hat - kappa_true)) < tol
    elapsed = time.time() - t0
    _verdict(10, "joint fit recovers weights and kernel, clean and noisy", ok, elapsed, 10)
    assert ok
    assert elapsed < 10


def test_11_bootstrap_separates_flow_effect_from_null():
    t0 = time.time()
    verdicts = {}
    for label, scale in (("effect", 0.4), ("null", 0.0)):
        w = gen_planted_world(n=800, d=20, k_features=4, kernel_scale=scale,
                              flow_density=0.3, seed=0, z_noise=0.02)
        r = bootstrap_cv(w.feature_matrix, w.z_observed, w.flows, n_boot=200, seed=0)
        gap = r.plain.mean - r.rectified.mean
        se = math.sqrt(r.plain.stderr ** 2 + r.rectified.stderr ** 2)
        verdicts[label] = gap / se
    ok = verdicts["effect"] > 2 and abs(verdicts["null"]) < 2
    elapsed = time.time() - t0
    _verdict(11, "bootstrap flags a real flow effect and clears a null one", ok, elapsed, 120)
    assert ok
    assert elapsed < 120


def test_12_pvalue_filter_keeps_real_support_with_uniform_nulls():
    t0 = time.time()
    exact = 0
    for seed in range(5):
        w = gen_planted_world(n=183, d=20, k_features=6, n_active=3, kernel_scale=0.0,
                              flow_density=0.0, seed=seed, z_noise=0.01)
        fit = ols_fit(w.feature_matrix, w.z_observed)
        sel = select_features(fit, w.feature_matrix, w.z_observed, threshold=0.05)
        exact += sel.kept == (0, 1, 2)
    support_ok = exact >= 3

    regions = tuple("R%03d" % i for i in range(60))
    a_true = np.array([0.5, 1.0, -0.8, 0.6, 0.0, 0.0, 0.0])
    null_ps = []
    for rep in range(5000):
        rng = stream_rng(2024, "nullfit", rep)
        B = np.hstack([np.ones((60, 1)), rng.standard_normal((60, 6))])
        zv = B @ a_true + 0.3 * rng.standard_normal(60)
        fit = ols_fit(FeatureMatrix(regions, B), MortalityVector(regions, zv, np.exp(zv)))
        null_ps.extend(fit.p_values[3:])
    null_ps = np.sort(np.asarray(null_ps))
    m = null_ps.size
    ks = max(np.max(np.arange(1, m + 1) / m - null_ps),
             np.max(null_ps - np.arange(0, m) / m))
    ks_oracle = scipy.stats.kstest(null_ps, "uniform").statistic
    uniform_ok = ks < 0.03 and abs(ks - ks_oracle) < 1e-10

    ok = support_ok and uniform_ok
    elapsed = time.time() - t0
    _verdict(12, "filter keeps the real support; null p-values stay uniform", ok, elapsed, 300)
    assert ok
    assert elapsed < 300


def test_13_weights_stable_under_appended_column_and_region():
    t0 = time.time()
    stable = 0
    for seed in range(5):
        w = gen_planted_world(n=60, d=16, k_features=1, kernel_scale=0.0,
                              flow_density=0.0, seed=seed, obs_frac=0.95,
                              z_noise=0.005, lift_strength=0.1)
        cfg = PipelineConfig(
            panel="panel.csv", mortality="mortality.csv", out_dir="out", seed=seed,
            completion=CompletionConfig(max_rank=8),
            features=FeatureParams(bottleneck=1, epochs=1500, batch_size=16, seed=seed),
        )
        res = robustness_test(cfg, w.panel, w.z_observed, None, n_trials=1, seed=seed)
        kinds = sorted(t.kind for t in res.trials)
        stable += kinds == ["column", "row"] and res.max_perturbation < 0.05
    ok = stable >= 4
    elapsed = time.time() - t0
    _verdict(13, "appended column and region move surviving weights under 5%", ok, elapsed, 900)
    assert ok
    assert elapsed < 900


def test_14_rerun_reproduces_manifest_hashes(tmp_path):
    t0 = time.time()
    w = tmp_path / "world"
    rc = main([
        "synth", "--n", "40", "--d", "12", "--k-features", "2",
        "--kernel-scale", "0.25", "--flow-density", "0.4", "--obs-frac", "0.95",
        "--z-noise", "0.005", "--lift-strength", "0.1", "--weeks", "156",
        "--amplitude", "3.0", "--weekly-noise", "0.3", "--seed", "5",
        "--out", str(w),
    ])
    assert rc == 0
    cfg_path = w / "pipeline.cfg"
    cfg = cfg_path.read_text()
    cfg = cfg.replace("[autoencoder]\nbottleneck = 2",
                      "[autoencoder]\nbottleneck = 2\nepochs = 1000")
    cfg = cfg.replace("n_boot = 200", "n_boot = 120")
    cfg_path.write_text(cfg)
    hashes = []
    for run in ("run_a", "run_b"):
        rc = main(["run", "--config", str(cfg_path), "--out", str(w / run)])
        assert rc == 0
        manifest = load_manifest(str(w / run))
        hashes.append({e.name: e.sha256 for e in manifest.entries})
    ok = hashes[0] == hashes[1] and len(hashes[0]) > 0
    elapsed = time.time() - t0
    _verdict(14, "two runs from one seed produce identical manifests", ok, elapsed, 1200)
    assert ok
    assert elapsed < 1200
