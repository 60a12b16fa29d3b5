"""Periodicity detection through a direct discrete Fourier transform.

The transform is evaluated as the literal O(N^2) sum
X[k] = sum_{n=1..N} x_n exp(-i 2 pi k n / N) for k = 1..N, where the
k = N bin plays the DC role.  At the few hundred samples a weekly
series holds, the quadratic cost is irrelevant and the implementation
stays auditable against the defining formula.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NoPeriodError, ShapeError
from .data import WeeklySeries

PEAK_RATIO_CAP = 1e12


@dataclass(frozen=True)
class Spectrum:
    """DFT coefficients indexed k = 1..n; coefficients[i] holds k = i + 1."""

    coefficients: np.ndarray
    n: int

    def __post_init__(self):
        coeff = np.array(self.coefficients, dtype=complex)
        if coeff.ndim != 1 or coeff.size != self.n:
            raise ShapeError("coefficient vector must have length n")
        if self.n < 4:
            raise DomainError("a spectrum needs at least 4 bins")
        if not np.all(np.isfinite(coeff)):
            raise DomainError("non-finite spectrum coefficient")
        coeff.setflags(write=False)
        object.__setattr__(self, "coefficients", coeff)

    def coefficient(self, k):
        if not 1 <= k <= self.n:
            raise DomainError("k must lie in 1..%d" % self.n)
        return complex(self.coefficients[k - 1])

    def magnitudes(self):
        return np.abs(self.coefficients)


def dft_values(x):
    """Direct transform of a raw sample vector (1-based convention)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ShapeError("dft expects a 1-d sample vector")
    n = x.size
    if n < 4:
        raise DomainError("dft needs at least 4 samples")
    if not np.all(np.isfinite(x)):
        raise DomainError("non-finite sample value")
    k = np.arange(1, n + 1)
    sample = np.arange(1, n + 1)
    phase = np.exp(-2j * np.pi * np.outer(k, sample) / n)
    return Spectrum(phase @ x, n)


def dft(series):
    """Transform of a WeeklySeries; week 0 maps to the n = 1 sample."""
    if not isinstance(series, WeeklySeries):
        raise ShapeError("dft expects a WeeklySeries")
    return dft_values(series.activity)


def dominant_period(spectrum, min_k=1):
    """Locate the dominant cycle among bins min_k..floor(n/2).

    Returns (period, peak_k, peak_ratio) with period = n / peak_k in
    weeks.  The searched band never includes the DC bin (k = n), so a
    constant offset cannot masquerade as a cycle; a spectrum that is
    numerically zero inside the band raises NoPeriodError.  Ties are
    broken toward the smaller k, i.e. the longer period.
    """
    if not isinstance(spectrum, Spectrum):
        raise ShapeError("dominant_period expects a Spectrum")
    n = spectrum.n
    hi = n // 2
    if not 1 <= min_k <= hi:
        raise DomainError("min_k must lie in 1..%d" % hi)
    mags = spectrum.magnitudes()
    band = mags[min_k - 1 : hi]
    scale = float(mags.max())
    peak_val = float(band.max())
    if scale == 0.0 or peak_val <= 1e-12 * scale:
        raise NoPeriodError("no spectral peak above the numerical floor in bins %d..%d" % (min_k, hi))
    # ties resolved toward smaller k; a relative tolerance keeps physically
    # equal peaks from being ordered by round-off
    candidates = np.nonzero(band >= peak_val * (1.0 - 1e-12))[0]
    peak_idx = int(candidates[0])
    peak_k = min_k + peak_idx
    rest = np.delete(band, peak_idx)
    second = float(rest.max()) if rest.size else 0.0
    if second <= 0.0:
        ratio = PEAK_RATIO_CAP
    else:
        ratio = min(float(band[peak_idx]) / second, PEAK_RATIO_CAP)
    return n / peak_k, peak_k, ratio
