"""Shared synthetic constructions used by several test modules."""

import numpy as np

from fluflow.data import IndicatorPanel, LabelVector
from fluflow.rng import stream_rng


def class_world(seed, n=40, d=12, obs=0.4, nuisance=3.0):
    """Rank-2 panel whose class signal is mostly hidden by missingness.

    Every column mixes the class direction u with a stronger nuisance
    direction v, so zero-filling the missing entries breaks the linear
    cancellation of the nuisance while completion restores it.
    """
    rng = stream_rng(seed, "classworld")
    c = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    if np.all(c == c[0]):
        c[0] = -c[0]
    a = nuisance * rng.standard_normal(n)
    u = rng.uniform(0.5, 1.5, d) * np.where(rng.random(d) < 0.5, -1, 1)
    v = rng.uniform(0.5, 1.5, d) * np.where(rng.random(d) < 0.5, -1, 1)
    X = np.outer(c, u) + np.outer(a, v)
    mask = rng.random((n, d)) < obs
    for i in range(n):
        if not mask[i].any():
            mask[i, int(rng.integers(d))] = True
    for j in range(d):
        if not mask[:, j].any():
            mask[int(rng.integers(n)), j] = True
    regions = tuple("R%03d" % i for i in range(n))
    panel = IndicatorPanel(
        regions, tuple("c%d" % j for j in range(d)), np.where(mask, X, 0.0), mask
    )
    labels = LabelVector(regions, c.astype(int))
    return panel, labels
