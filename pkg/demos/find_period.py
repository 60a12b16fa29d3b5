"""Detect a planted yearly cycle in a noisy weekly series.

Five years of weekly counts with a 52-week cycle and heavy noise; the
spectrum should put the dominant peak in bin 5 (260 / 52).
"""

from fluflow.spectral import dft, dominant_period
from fluflow.synth import gen_periodic_series


def main():
    series = gen_periodic_series(260, 52, amplitude=1.0, noise_sigma=0.3, seed=7)
    print("series: %d weeks, first five values %s"
          % (series.activity.size,
             ", ".join("%.2f" % v for v in series.activity[:5])))

    spectrum = dft(series)
    period, peak_k, ratio = dominant_period(spectrum)
    print("peak bin            %d" % peak_k)
    print("period              %d weeks" % period)
    print("peak over runner-up %.2f" % ratio)

    mags = {k: abs(spectrum.coefficient(k)) for k in range(1, 11)}
    top = max(mags.values())
    for k, mag in mags.items():
        bar = "#" * int(round(40 * mag / top))
        print("  k=%2d |%-40s| %.1f" % (k, bar, mag))


if __name__ == "__main__":
    main()
