"""Shared data model: panels, series, mortality, flows, and CSV codecs.

Every container is frozen after construction and safe for concurrent
reads.  CSV files are UTF-8, comma separated, '.' decimal point.  An
empty cell is the only representation of a missing value; literal NA or
NaN tokens are rejected so silent coercion cannot happen.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DomainError,
    ParseError,
    RegionLookupError,
    SchemaError,
    ShapeError,
)

LABEL_TOKENS = {"developed": 1, "developing": -1}


def fmt(x):
    """Format a float with 17 significant digits, enough to round-trip."""
    return "%.17g" % float(x)


_REJECT_TOKENS = {"na", "nan", "inf", "-inf", "+inf", "infinity", "-infinity"}


def _parse_cell(text, line, column):
    token = text.strip()
    if token.lower() in _REJECT_TOKENS:
        raise ParseError(
            "line %d, column '%s': token '%s' is not accepted, "
            "leave the cell empty to mark a missing value" % (line, column, text)
        )
    try:
        value = float(token)
    except ValueError:
        raise ParseError(
            "line %d, column '%s': cannot parse '%s' as a number" % (line, column, text)
        ) from None
    if not math.isfinite(value):
        raise ParseError("line %d, column '%s': non-finite value '%s'" % (line, column, text))
    return value


def _frozen(arr):
    arr.setflags(write=False)
    return arr


def _check_unique(names, what):
    if len(set(names)) != len(names):
        seen = set()
        for name in names:
            if name in seen:
                raise SchemaError("duplicate %s '%s'" % (what, name))
            seen.add(name)


# ===================================================================
# indicator panel
# ===================================================================

@dataclass(frozen=True)
class IndicatorPanel:
    """Region-by-indicator matrix with an observed-entry mask.

    values holds 0.0 placeholders at unobserved positions; mask is True
    where a value was actually observed.
    """

    regions: tuple
    indicators: tuple
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        regions = tuple(str(r) for r in self.regions)
        indicators = tuple(str(c) for c in self.indicators)
        _check_unique(regions, "region code")
        _check_unique(indicators, "indicator name")
        if len(regions) < 2:
            raise SchemaError("an indicator panel needs at least 2 regions")
        if len(indicators) < 1:
            raise SchemaError("an indicator panel needs at least 1 indicator")
        values = np.array(self.values, dtype=float)
        mask = np.array(self.mask, dtype=bool)
        want = (len(regions), len(indicators))
        if values.shape != want:
            raise ShapeError("values shape %s does not match %s" % (values.shape, want))
        if mask.shape != want:
            raise ShapeError("mask shape %s does not match %s" % (mask.shape, want))
        if not np.all(np.isfinite(values[mask])):
            raise DomainError("non-finite value at an observed position")
        values = values.copy()
        values[~mask] = 0.0
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "indicators", indicators)
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "mask", _frozen(mask))

    @property
    def shape(self):
        return self.values.shape

    def region_index(self, code):
        try:
            return self.regions.index(code)
        except ValueError:
            raise RegionLookupError("unknown region '%s'" % code) from None


def load_indicator_panel(path):
    """Read a `region,<indicator>...` CSV into an IndicatorPanel."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError("%s: empty file" % path)
    header = rows[0]
    if not header or header[0] != "region":
        raise SchemaError("%s: first header field must be 'region'" % path)
    indicators = tuple(header[1:])
    regions = []
    n_cols = len(indicators)
    values = np.zeros((len(rows) - 1, n_cols))
    mask = np.zeros((len(rows) - 1, n_cols), dtype=bool)
    for i, row in enumerate(rows[1:]):
        line = i + 2
        if len(row) != n_cols + 1:
            raise SchemaError(
                "line %d: expected %d fields, found %d" % (line, n_cols + 1, len(row))
            )
        regions.append(row[0])
        for j, cell in enumerate(row[1:]):
            if cell == "":
                continue
            values[i, j] = _parse_cell(cell, line, indicators[j])
            mask[i, j] = True
    return IndicatorPanel(tuple(regions), indicators, values, mask)


def write_indicator_panel(panel, path):
    """Inverse of load_indicator_panel; missing entries become empty cells."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("region",) + panel.indicators)
        for i, region in enumerate(panel.regions):
            row = [region]
            for j in range(len(panel.indicators)):
                row.append(fmt(panel.values[i, j]) if panel.mask[i, j] else "")
            writer.writerow(row)


def append_indicator_column(panel, name, column):
    """New panel with one fully observed column appended."""
    column = np.asarray(column, dtype=float).reshape(-1)
    if column.shape[0] != len(panel.regions):
        raise ShapeError("column length %d does not match %d regions" % (column.shape[0], len(panel.regions)))
    values = np.hstack([panel.values, column[:, None]])
    mask = np.hstack([panel.mask, np.ones((len(panel.regions), 1), dtype=bool)])
    return IndicatorPanel(panel.regions, panel.indicators + (str(name),), values, mask)


def append_region_row(panel, code, row):
    """New panel with one fully observed region row appended."""
    row = np.asarray(row, dtype=float).reshape(-1)
    if row.shape[0] != len(panel.indicators):
        raise ShapeError("row length %d does not match %d indicators" % (row.shape[0], len(panel.indicators)))
    values = np.vstack([panel.values, row[None, :]])
    mask = np.vstack([panel.mask, np.ones((1, len(panel.indicators)), dtype=bool)])
    return IndicatorPanel(panel.regions + (str(code),), panel.indicators, values, mask)


def restrict_panel(panel, regions):
    """Panel restricted to the given regions, in the given order."""
    idx = [panel.region_index(r) for r in regions]
    return IndicatorPanel(tuple(regions), panel.indicators, panel.values[idx], panel.mask[idx])


# ===================================================================
# column standardization
# ===================================================================

@dataclass(frozen=True)
class StandardizedPanel:
    """standardize_columns output: the panel plus a record of what was dropped."""

    panel: IndicatorPanel
    dropped: tuple
    means: np.ndarray
    stds: np.ndarray


def standardize_columns(panel):
    """Zero-mean unit-variance columns, statistics over observed entries only.

    Columns with fewer than two observed entries or zero variance carry no
    information after centering, so they are dropped and recorded instead
    of poisoning downstream stages with divide-by-zero artifacts.
    """
    values = panel.values
    mask = panel.mask
    keep, dropped, means, stds = [], [], [], []
    for j, name in enumerate(panel.indicators):
        obs = values[mask[:, j], j]
        if obs.size < 2:
            dropped.append(name)
            continue
        mean = float(obs.mean())
        std = float(obs.std())
        if std <= 1e-12 * max(1.0, abs(mean)):
            dropped.append(name)
            continue
        keep.append(j)
        means.append(mean)
        stds.append(std)
    if not keep:
        raise DomainError("every column is constant or nearly unobserved")
    means = np.array(means)
    stds = np.array(stds)
    sub = (values[:, keep] - means) / stds
    sub_mask = mask[:, keep]
    sub[~sub_mask] = 0.0
    out = IndicatorPanel(panel.regions, tuple(panel.indicators[j] for j in keep), sub, sub_mask)
    return StandardizedPanel(out, tuple(dropped), _frozen(means), _frozen(stds))


# ===================================================================
# weekly activity series
# ===================================================================

@dataclass(frozen=True)
class WeeklySeries:
    """One region's weekly activity counts on a gapless week grid."""

    region: str
    week_index: np.ndarray
    activity: np.ndarray

    def __post_init__(self):
        weeks = np.array(self.week_index, dtype=int)
        activity = np.array(self.activity, dtype=float)
        if weeks.ndim != 1 or activity.shape != weeks.shape:
            raise ShapeError("week_index and activity must be equal-length vectors")
        if weeks.size < 4:
            raise DomainError("a weekly series needs at least 4 samples")
        if not np.array_equal(weeks, np.arange(weeks.size)):
            raise SchemaError("week indices must be consecutive starting at 0")
        if not np.all(np.isfinite(activity)):
            raise DomainError("non-finite activity value")
        if np.any(activity < 0):
            raise DomainError("negative activity value")
        object.__setattr__(self, "region", str(self.region))
        object.__setattr__(self, "week_index", _frozen(weeks))
        object.__setattr__(self, "activity", _frozen(activity))

    def __len__(self):
        return self.activity.size


def load_weekly_activity(path):
    """Read a `region,week,activity` CSV into {region: WeeklySeries}."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["region", "week", "activity"]:
        raise SchemaError("%s: header must be region,week,activity" % path)
    per_region = {}
    for i, row in enumerate(rows[1:]):
        line = i + 2
        if len(row) != 3:
            raise SchemaError("line %d: expected 3 fields" % line)
        region = row[0]
        try:
            week = int(row[1])
        except ValueError:
            raise ParseError("line %d, column 'week': cannot parse '%s'" % (line, row[1])) from None
        per_region.setdefault(region, []).append((week, _parse_cell(row[2], line, "activity")))
    out = {}
    for region, pairs in per_region.items():
        pairs.sort()
        weeks = np.array([p[0] for p in pairs])
        activity = np.array([p[1] for p in pairs])
        out[region] = WeeklySeries(region, weeks, activity)
    if not out:
        raise SchemaError("%s: no data rows" % path)
    return out


def write_weekly_activity(series_list, path):
    """Inverse of load_weekly_activity; accepts any iterable of series."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("region", "week", "activity"))
        for series in series_list:
            for week, value in zip(series.week_index, series.activity):
                writer.writerow((series.region, int(week), fmt(value)))


def merge_weekly_global(series_map):
    """Sum activity across regions; requires one shared week grid."""
    series = list(series_map.values())
    n = len(series[0])
    for s in series[1:]:
        if len(s) != n:
            raise SchemaError("regions disagree on the week grid; cannot form a global series")
    total = np.sum([s.activity for s in series], axis=0)
    return WeeklySeries("GLOBAL", np.arange(n), total)


# ===================================================================
# mortality
# ===================================================================

@dataclass(frozen=True)
class MortalityVector:
    """Per-region mortality: raw death rate plus its normalized form z."""

    regions: tuple
    z: np.ndarray
    raw_rate: np.ndarray

    def __post_init__(self):
        regions = tuple(str(r) for r in self.regions)
        _check_unique(regions, "region code")
        z = np.array(self.z, dtype=float)
        raw = np.array(self.raw_rate, dtype=float)
        if z.shape != (len(regions),) or raw.shape != z.shape:
            raise ShapeError("regions, z and raw_rate lengths disagree")
        if not np.all(np.isfinite(z)):
            raise DomainError("non-finite z value")
        if np.any(raw <= 0) or not np.all(np.isfinite(raw)):
            raise DomainError("raw death rates must be positive and finite")
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "z", _frozen(z))
        object.__setattr__(self, "raw_rate", _frozen(raw))

    def region_index(self, code):
        try:
            return self.regions.index(code)
        except ValueError:
            raise RegionLookupError("unknown region '%s'" % code) from None


def normalize_mortality(raw, rate_floor=False):
    """Log-transform death rates and standardize to mean 0, std 1.

    raw is a sequence of (region, rate) pairs.  The std is the population
    std over regions.  rate_floor=True replaces zero rates with half the
    smallest positive observed rate instead of failing.
    """
    regions = tuple(str(r) for r, _ in raw)
    _check_unique(regions, "region code")
    rates = np.array([float(v) for _, v in raw])
    if rates.size < 2:
        raise DomainError("mortality normalization needs at least 2 regions")
    if not np.all(np.isfinite(rates)):
        raise DomainError("non-finite death rate")
    if np.any(rates < 0):
        bad = regions[int(np.argmax(rates < 0))]
        raise DomainError("negative death rate for region '%s'" % bad)
    zero = rates == 0
    if np.any(zero):
        if not rate_floor:
            bad = regions[int(np.argmax(zero))]
            raise DomainError(
                "zero death rate for region '%s'; enable rate_floor to substitute a floor" % bad
            )
        positive = rates[~zero]
        if positive.size == 0:
            raise DomainError("all death rates are zero; no floor can be derived")
        rates = rates.copy()
        rates[zero] = 0.5 * positive.min()
    logs = np.log(rates)
    std = logs.std()
    if std <= 1e-12 * max(1.0, abs(float(logs.mean()))):
        raise DomainError("death rates have zero variance after the log transform")
    z = (logs - logs.mean()) / std
    return MortalityVector(regions, z, rates)


def load_mortality_rates(path):
    """Read a `region,death_rate` CSV into [(region, rate), ...]."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["region", "death_rate"]:
        raise SchemaError("%s: header must be region,death_rate" % path)
    out = []
    for i, row in enumerate(rows[1:]):
        line = i + 2
        if len(row) != 2:
            raise SchemaError("line %d: expected 2 fields" % line)
        out.append((row[0], _parse_cell(row[1], line, "death_rate")))
    if len(out) < 2:
        raise SchemaError("%s: need at least 2 regions" % path)
    return out


def write_mortality_rates(pairs, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("region", "death_rate"))
        for region, rate in pairs:
            writer.writerow((region, fmt(rate)))


def restrict_mortality(vector, regions):
    idx = [vector.region_index(r) for r in regions]
    return MortalityVector(tuple(regions), vector.z[idx], vector.raw_rate[idx])


# ===================================================================
# flows
# ===================================================================

@dataclass(frozen=True)
class FlowPair:
    """Migration and trade matrices on one shared region ordering.

    Both matrices have zero diagonal and entries in [0, 1]; after
    normalize_flows the max entry of each non-zero matrix is exactly 1.
    """

    regions: tuple
    m: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        regions = tuple(str(r) for r in self.regions)
        _check_unique(regions, "region code")
        n = len(regions)
        m = np.array(self.m, dtype=float)
        t = np.array(self.t, dtype=float)
        for name, mat in (("migration", m), ("trade", t)):
            if mat.shape != (n, n):
                raise ShapeError("%s matrix shape %s is not (%d, %d)" % (name, mat.shape, n, n))
            if not np.all(np.isfinite(mat)):
                raise DomainError("non-finite %s flow" % name)
            if np.any(mat < 0) or np.any(mat > 1):
                raise DomainError("%s flows must lie in [0, 1] after normalization" % name)
            if np.any(np.diag(mat) != 0):
                raise DomainError("%s matrix must have a zero diagonal" % name)
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "m", _frozen(m))
        object.__setattr__(self, "t", _frozen(t))


def normalize_flows(raw_m, raw_t, regions):
    """Zero the diagonals, then scale each matrix so its max entry is 1."""
    n = len(regions)
    out = []
    for name, raw in (("migration", raw_m), ("trade", raw_t)):
        mat = np.array(raw, dtype=float)
        if mat.shape != (n, n):
            raise ShapeError("%s matrix shape %s is not (%d, %d)" % (name, mat.shape, n, n))
        if not np.all(np.isfinite(mat)):
            raise DomainError("non-finite %s flow" % name)
        if np.any(mat < 0):
            raise DomainError("%s flows must be non-negative" % name)
        np.fill_diagonal(mat, 0.0)
        peak = mat.max()
        if peak > 0:
            mat = mat / peak
        out.append(mat)
    return FlowPair(tuple(regions), out[0], out[1])


def load_flow_matrix(path):
    """Read a square flow CSV with a region header row and column."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0] != "region":
        raise SchemaError("%s: first header field must be 'region'" % path)
    header = tuple(rows[0][1:])
    n = len(header)
    if len(rows) - 1 != n:
        raise SchemaError("%s: %d header regions but %d rows" % (path, n, len(rows) - 1))
    mat = np.zeros((n, n))
    codes = []
    for i, row in enumerate(rows[1:]):
        line = i + 2
        if len(row) != n + 1:
            raise SchemaError("line %d: expected %d fields" % (line, n + 1))
        codes.append(row[0])
        for j, cell in enumerate(row[1:]):
            mat[i, j] = _parse_cell(cell, line, header[j])
    if tuple(codes) != header:
        raise SchemaError("%s: row region order does not match the header" % path)
    return header, mat


def write_flow_matrix(regions, mat, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("region",) + tuple(regions))
        for i, region in enumerate(regions):
            writer.writerow((region,) + tuple(fmt(v) for v in mat[i]))


def restrict_flows(flows, regions):
    idx = [flows.regions.index(r) for r in regions]
    sel = np.ix_(idx, idx)
    return FlowPair(tuple(regions), flows.m[sel], flows.t[sel])


# ===================================================================
# features, kernel coefficients, labels
# ===================================================================

@dataclass(frozen=True)
class FeatureMatrix:
    """Regression design: intercept column of ones plus feature columns."""

    regions: tuple
    B: np.ndarray

    def __post_init__(self):
        regions = tuple(str(r) for r in self.regions)
        _check_unique(regions, "region code")
        B = np.array(self.B, dtype=float)
        if B.ndim != 2 or B.shape[0] != len(regions):
            raise ShapeError("B must be (n_regions, 1 + n_features)")
        if B.shape[1] < 1 or not np.all(B[:, 0] == 1.0):
            raise SchemaError("column 0 of a feature matrix must be all ones")
        if not np.all(np.isfinite(B)):
            raise DomainError("non-finite feature value")
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "B", _frozen(B))

    @property
    def n_features(self):
        return self.B.shape[1] - 1

    def region_index(self, code):
        try:
            return self.regions.index(code)
        except ValueError:
            raise RegionLookupError("unknown region '%s'" % code) from None


def feature_matrix_from_scores(regions, scores):
    """Scale score columns to unit sample variance and prepend an intercept.

    Score columns are expected to be mean-centered (PCA scores are); a
    column with no variance cannot be scaled and raises DomainError.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 2 or scores.shape[0] != len(regions):
        raise ShapeError("scores must be (n_regions, n_features)")
    if scores.shape[0] < 2:
        raise DomainError("need at least 2 regions to scale feature columns")
    std = scores.std(axis=0, ddof=1)
    if np.any(std <= 0):
        raise DomainError("feature column %d has zero variance" % int(np.argmax(std <= 0)))
    B = np.hstack([np.ones((scores.shape[0], 1)), scores / std])
    return FeatureMatrix(tuple(regions), B)


def check_feature_orthonormal(fm, tol=1e-6):
    """Verify feature columns are pairwise orthogonal with unit sample variance."""
    X = fm.B[:, 1:]
    if X.shape[1] == 0:
        return
    n = X.shape[0]
    centered = X - X.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    if np.max(np.abs(np.diag(cov) - 1.0)) > tol:
        raise DomainError("feature columns are not unit variance")
    off = cov - np.diag(np.diag(cov))
    if np.max(np.abs(off)) > tol:
        raise DomainError("feature columns are not mutually orthogonal")


def load_feature_matrix(path):
    """Read a `region,feature_1,...` CSV of scores into a FeatureMatrix."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0] != "region":
        raise SchemaError("%s: first header field must be 'region'" % path)
    names = rows[0][1:]
    regions, data = [], []
    for i, row in enumerate(rows[1:]):
        line = i + 2
        if len(row) != len(names) + 1:
            raise SchemaError("line %d: expected %d fields" % (line, len(names) + 1))
        regions.append(row[0])
        data.append([_parse_cell(c, line, names[j]) for j, c in enumerate(row[1:])])
    B = np.hstack([np.ones((len(regions), 1)), np.array(data)])
    return FeatureMatrix(tuple(regions), B)


def write_feature_matrix(fm, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["region"] + ["feature_%d" % (j + 1) for j in range(fm.n_features)])
        for i, region in enumerate(fm.regions):
            writer.writerow([region] + [fmt(v) for v in fm.B[i, 1:]])


@dataclass(frozen=True)
class KernelCoefficients:
    """Flow-kernel weights: 4 for migration (alpha), 4 for trade (beta)."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float)
        beta = np.array(self.beta, dtype=float)
        if alpha.shape != (4,) or beta.shape != (4,):
            raise ShapeError("alpha and beta must each hold 4 coefficients")
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))):
            raise DomainError("non-finite kernel coefficient")
        object.__setattr__(self, "alpha", _frozen(alpha))
        object.__setattr__(self, "beta", _frozen(beta))

    @classmethod
    def zeros(cls):
        return cls(np.zeros(4), np.zeros(4))

    def max_abs(self):
        return float(max(np.max(np.abs(self.alpha)), np.max(np.abs(self.beta))))


@dataclass(frozen=True)
class LabelVector:
    """Binary labels in {+1, -1}; both classes must be present."""

    regions: tuple
    y: np.ndarray

    def __post_init__(self):
        regions = tuple(str(r) for r in self.regions)
        _check_unique(regions, "region code")
        y = np.array(self.y, dtype=int)
        if y.shape != (len(regions),):
            raise ShapeError("labels length does not match regions")
        if not np.all(np.isin(y, (-1, 1))):
            raise DomainError("labels must be +1 or -1")
        if np.all(y == 1) or np.all(y == -1):
            raise DomainError("both classes must be present")
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "y", _frozen(y))


def load_labels(path):
    """Read a `region,label` CSV; labels are 'developed' or 'developing'."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["region", "label"]:
        raise SchemaError("%s: header must be region,label" % path)
    regions, y = [], []
    for i, row in enumerate(rows[1:]):
        line = i + 2
        if len(row) != 2:
            raise SchemaError("line %d: expected 2 fields" % line)
        token = row[1].strip().lower()
        if token not in LABEL_TOKENS:
            raise ParseError("line %d: unknown label '%s'" % (line, row[1]))
        regions.append(row[0])
        y.append(LABEL_TOKENS[token])
    return LabelVector(tuple(regions), np.array(y))


def write_labels(labels, path):
    names = {v: k for k, v in LABEL_TOKENS.items()}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("region", "label"))
        for region, value in zip(labels.regions, labels.y):
            writer.writerow((region, names[int(value)]))


def restrict_labels(labels, regions):
    index = {r: i for i, r in enumerate(labels.regions)}
    try:
        idx = [index[r] for r in regions]
    except KeyError as exc:
        raise RegionLookupError("unknown region '%s'" % exc.args[0]) from None
    return LabelVector(tuple(regions), labels.y[idx])


def common_regions(*sequences):
    """Regions present in every sequence, ordered like the first one."""
    if not sequences:
        return ()
    present = set(sequences[0])
    for seq in sequences[1:]:
        present &= set(seq)
    ordered = tuple(r for r in sequences[0] if r in present)
    if len(ordered) < 2:
        raise DomainError("fewer than 2 regions are shared by all inputs")
    return ordered
