import numpy as np
import pytest

from fluflow.completion import (
    CompletionConfig,
    completed_panel,
    numerical_rank,
    soft_impute,
    svt,
)
from fluflow.data import IndicatorPanel
from fluflow.errors import CompletionInputError, ShapeError
from fluflow.rng import stream_rng
from fluflow.synth import gen_low_rank


def _panel(values, mask):
    n, d = values.shape
    return IndicatorPanel(
        tuple("R%03d" % i for i in range(n)),
        tuple("c%d" % j for j in range(d)),
        np.where(mask, values, 0.0),
        mask,
    )


# -------------------------------------------------------------------
# numerical_rank
# -------------------------------------------------------------------

def test_rank_identity():
    assert numerical_rank(np.eye(5)) == 5


def test_rank_outer_product():
    rng = stream_rng(0, "rank")
    u = rng.standard_normal(8)
    v = rng.standard_normal(6)
    assert numerical_rank(np.outer(u, v)) == 1


def test_rank_zero_matrix():
    assert numerical_rank(np.zeros((4, 7))) == 0


def test_rank_respects_tolerance():
    m = np.diag([1.0, 1e-3, 1e-12])
    assert numerical_rank(m, tol=1e-8) == 2
    assert numerical_rank(m, tol=1e-6) == 2
    assert numerical_rank(m, tol=1e-1) == 1


# -------------------------------------------------------------------
# svt shrinkage
# -------------------------------------------------------------------

def test_svt_shrinks_singular_values():
    # explicit 3x3 with known spectrum: each output sigma = max(sigma - lam, 0)
    rng = stream_rng(1, "svt")
    q1, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    q2, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    sigma = np.array([5.0, 2.0, 0.5])
    m = q1 @ np.diag(sigma) @ q2.T
    lam = 1.0
    out, shrunk = svt(m, lam)
    got = np.linalg.svd(out, compute_uv=False)
    want = np.maximum(sigma - lam, 0.0)
    assert np.allclose(np.sort(got)[::-1], want, atol=1e-10)
    assert np.allclose(np.sort(shrunk)[::-1], want[want > 0], atol=1e-10)


def test_svt_max_rank_truncates():
    m = np.diag([4.0, 3.0, 2.0, 1.0])
    out, shrunk = svt(m, 0.0, max_rank=2)
    assert numerical_rank(out) == 2
    assert shrunk.size == 2


# -------------------------------------------------------------------
# soft_impute
# -------------------------------------------------------------------

def test_fully_observed_is_identity_in_one_iteration():
    rng = stream_rng(2, "full")
    values = rng.standard_normal((10, 6))
    panel = _panel(values, np.ones((10, 6), bool))
    res = soft_impute(panel)
    assert np.array_equal(res.completed, values)
    assert res.iterations == 1
    assert res.converged


def test_observed_entries_reimposed_exactly():
    panel, _ = gen_low_rank(40, 25, 3, 0.6, 0.0, seed=3)
    res = soft_impute(panel)
    assert np.array_equal(res.completed[panel.mask], panel.values[panel.mask])


def test_rank_one_recovery():
    # 100x80, half observed: relative error under 1e-3
    panel, full = gen_low_rank(100, 80, 1, 0.5, 0.0, seed=4)
    res = soft_impute(panel)
    rel = np.linalg.norm(res.completed - full) / np.linalg.norm(full)
    assert rel < 1e-3


def test_planted_rank_recovered():
    panel, full = gen_low_rank(60, 40, 3, 0.5, 0.0, seed=5)
    res = soft_impute(panel)
    assert res.rank == 3
    rel = np.linalg.norm(res.completed - full) / np.linalg.norm(full)
    assert rel < 1e-6
    assert res.converged


def test_objective_monotone_within_each_stage():
    panel, _ = gen_low_rank(30, 20, 2, 0.5, 0.0, seed=6)
    res = soft_impute(panel, CompletionConfig(polish=False))
    assert len(res.objective_history) == len(res.lambda_path)
    for stage in res.objective_history:
        stage = np.asarray(stage)
        assert np.all(np.diff(stage) <= 1e-9 * max(1.0, stage[0]))


def test_error_decreases_with_observation_fraction():
    # statistical trend over 5 seeds: more observations, less error
    fracs = (0.3, 0.5, 0.8)
    mean_err = []
    for frac in fracs:
        errs = []
        for seed in range(5):
            panel, full = gen_low_rank(50, 30, 2, frac, 0.0, seed=100 + seed)
            res = soft_impute(panel)
            errs.append(np.linalg.norm(res.completed - full) / np.linalg.norm(full))
        mean_err.append(np.mean(errs))
    assert mean_err[0] > mean_err[1] > mean_err[2]


def test_empty_row_rejected():
    values = np.ones((4, 4))
    mask = np.ones((4, 4), bool)
    mask[2, :] = False
    with pytest.raises(CompletionInputError) as err:
        soft_impute(_panel(values, mask))
    assert "R002" in str(err.value)


def test_empty_column_rejected():
    values = np.ones((4, 4))
    mask = np.ones((4, 4), bool)
    mask[:, 1] = False
    with pytest.raises(CompletionInputError) as err:
        soft_impute(_panel(values, mask))
    assert "c1" in str(err.value)


def test_max_rank_matching_truth_recovers():
    panel, full = gen_low_rank(40, 30, 4, 0.6, 0.0, seed=7)
    res = soft_impute(panel, CompletionConfig(max_rank=4))
    assert res.rank == 4
    rel = np.linalg.norm(res.completed - full) / np.linalg.norm(full)
    assert rel < 1e-6


def test_max_rank_below_truth_still_honors_observations():
    panel, _ = gen_low_rank(40, 30, 5, 0.9, 0.0, seed=7)
    res = soft_impute(panel, CompletionConfig(max_rank=2))
    assert np.array_equal(res.completed[panel.mask], panel.values[panel.mask])


def test_determinism():
    panel, _ = gen_low_rank(30, 20, 2, 0.5, 0.0, seed=8)
    a = soft_impute(panel)
    b = soft_impute(panel)
    assert np.array_equal(a.completed, b.completed)
    assert a.rank == b.rank and a.iterations == b.iterations


def test_config_validation():
    with pytest.raises(ShapeError):
        CompletionConfig(lambda_path=(1.0, 2.0))
    with pytest.raises(ShapeError):
        CompletionConfig(tol=0.0)
    with pytest.raises(ShapeError):
        CompletionConfig(max_rank=0)
    with pytest.raises(ShapeError):
        CompletionConfig(lambda_path=())


def test_completed_panel_wraps_result():
    panel, _ = gen_low_rank(20, 10, 1, 0.6, 0.0, seed=9)
    res = soft_impute(panel)
    out = completed_panel(panel, res)
    assert out.regions == panel.regions
    assert out.indicators == panel.indicators
    assert out.mask.all()
    assert np.array_equal(out.values, res.completed)
