import numpy as np
import pytest

from fluflow.data import WeeklySeries
from fluflow.errors import DomainError, NoPeriodError, ShapeError
from fluflow.rng import stream_rng
from fluflow.spectral import PEAK_RATIO_CAP, Spectrum, dft, dft_values, dominant_period
from fluflow.synth import gen_periodic_series


def _series(activity, region="GLB"):
    activity = np.asarray(activity, dtype=float)
    return WeeklySeries(region, np.arange(activity.size), activity)


def _fft_oracle(x):
    # the 1-based transform X[k] = sum_{n=1..N} x_n e^{-2pi i k n / N}
    # equals e^{-2pi i k / N} * FFT[k mod N] with x_n = x[n-1]
    n = len(x)
    F = np.fft.fft(x)
    k = np.arange(1, n + 1)
    return np.exp(-2j * np.pi * k / n) * F[k % n]


# -------------------------------------------------------------------
# dft against the FFT oracle
# -------------------------------------------------------------------

def test_dft_matches_fft_oracle():
    rng = stream_rng(0, "dft")
    for n in (16, 100, 260):
        x = rng.standard_normal(n)
        spec = dft_values(x)
        want = _fft_oracle(x)
        scale = np.abs(want).max()
        assert np.allclose(spec.coefficients, want, atol=1e-9 * scale)


def test_dft_of_weekly_series_uses_activity():
    series = gen_periodic_series(104, 26, 2.0, 0.0, seed=0)
    assert np.array_equal(
        dft(series).coefficients, dft_values(series.activity).coefficients
    )


def test_constant_series_is_dc_only():
    c = 3.7
    n = 50
    spec = dft(_series(np.full(n, c)))
    mags = spec.magnitudes()
    assert mags[n - 1] == pytest.approx(n * c, rel=1e-12)
    assert np.all(mags[: n - 1] < 1e-9 * n * c)


def test_single_tone_peaks_at_k5_and_mirror():
    n = 100
    grid = np.arange(1, n + 1)
    x = np.cos(2 * np.pi * 5 * grid / n)
    spec = dft_values(x)
    mags = spec.magnitudes()
    assert mags[5 - 1] == pytest.approx(n / 2, rel=1e-9)
    assert mags[95 - 1] == pytest.approx(n / 2, rel=1e-9)
    others = np.delete(mags, [4, 94])
    assert np.all(others < 1e-9 * n)


def test_conjugate_symmetry():
    rng = stream_rng(1, "dft")
    x = rng.standard_normal(64)
    spec = dft_values(x)
    n = spec.n
    for k in range(1, n):
        a = spec.coefficient(n - k)
        b = np.conj(spec.coefficient(k))
        assert abs(a - b) < 1e-9 * max(1.0, abs(b))


def test_parseval():
    rng = stream_rng(2, "dft")
    for _ in range(10):
        x = rng.standard_normal(80)
        spec = dft_values(x)
        lhs = np.sum(np.abs(x) ** 2)
        rhs = np.sum(np.abs(spec.coefficients) ** 2) / spec.n
        assert abs(lhs - rhs) < 1e-9 * lhs


def test_linearity():
    rng = stream_rng(3, "dft")
    x = rng.standard_normal(60)
    y = rng.standard_normal(60)
    a, b = 2.5, -1.25
    lhs = dft_values(a * x + b * y).coefficients
    rhs = a * dft_values(x).coefficients + b * dft_values(y).coefficients
    scale = np.abs(rhs).max()
    assert np.allclose(lhs, rhs, atol=1e-9 * scale)


def test_circular_shift_preserves_magnitudes():
    rng = stream_rng(4, "dft")
    x = rng.standard_normal(52)
    base = dft_values(x).magnitudes()
    for s in (1, 7, 25):
        shifted = dft_values(np.roll(x, s)).magnitudes()
        assert np.allclose(shifted, base, atol=1e-9 * base.max())


def test_dft_rejects_nonfinite():
    x = np.ones(8)
    x[3] = np.nan
    with pytest.raises(DomainError):
        dft_values(x)


def test_dft_requires_weekly_series():
    with pytest.raises(ShapeError):
        dft([1.0, 2.0, 3.0, 4.0])


# -------------------------------------------------------------------
# dominant_period
# -------------------------------------------------------------------

def test_single_tone_period_and_capped_ratio():
    n = 100
    grid = np.arange(1, n + 1)
    x = 1.0 + np.cos(2 * np.pi * 5 * grid / n)
    period, peak_k, ratio = dominant_period(dft(_series(x)))
    assert period == pytest.approx(20.0)
    assert peak_k == 5
    assert ratio == PEAK_RATIO_CAP


def test_two_equal_tones_tie_toward_smaller_k():
    n = 120
    grid = np.arange(1, n + 1)
    x = 2.0 + np.cos(2 * np.pi * 4 * grid / n) + np.cos(2 * np.pi * 10 * grid / n)
    period, peak_k, ratio = dominant_period(dft(_series(x)))
    assert peak_k == 4
    assert period == pytest.approx(30.0)
    assert ratio == pytest.approx(1.0, abs=1e-9)


def test_planted_yearly_period_with_noise():
    for seed in range(3):
        series = gen_periodic_series(260, 52, 3.0, 0.3, seed=seed)
        spec = dft(series)
        # brute force argmax over the searched band as an oracle
        mags = spec.magnitudes()
        band = mags[1:130]
        assert int(np.argmax(band)) + 2 == 5
        period, peak_k, ratio = dominant_period(spec, min_k=2)
        assert peak_k == 5
        assert period == pytest.approx(52.0)
        assert ratio > 3.0


def test_no_period_on_flat_series():
    with pytest.raises(NoPeriodError):
        dominant_period(dft(_series(np.full(40, 2.0))))


def test_min_k_bounds():
    x = 1.0 + np.sin(np.arange(20.0))
    spec = dft(_series(x))
    with pytest.raises(DomainError):
        dominant_period(spec, min_k=0)
    with pytest.raises(DomainError):
        dominant_period(spec, min_k=11)


def test_spectrum_needs_four_bins():
    with pytest.raises(DomainError):
        Spectrum(np.ones(3, dtype=complex), 3)
