"""Stage sequencing for the full modeling run.

Stages hand data to each other through files in the output directory, so
any stage whose artifacts already exist can be skipped and its outputs
reused.  Every emitted file lands in a manifest with a content hash,
which makes end-to-end determinism checkable with a plain diff.
"""

import csv
import fnmatch
import hashlib
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .classify import completion_consistency_check
from .completion import CompletionConfig, completed_panel, soft_impute
from .data import (
    FeatureMatrix,
    FlowPair,
    MortalityVector,
    append_indicator_column,
    append_region_row,
    feature_matrix_from_scores,
    fmt,
    load_feature_matrix,
    load_flow_matrix,
    load_indicator_panel,
    load_labels,
    load_mortality_rates,
    load_weekly_activity,
    merge_weekly_global,
    normalize_mortality,
    restrict_flows,
    restrict_labels,
    restrict_mortality,
    standardize_columns,
    write_feature_matrix,
    write_indicator_panel,
)
from .encode import (
    AutoencoderSpec,
    encode,
    geometric_layer_schedule,
    save_autoencoder,
    select_bottleneck,
    train_autoencoder,
)
from .errors import DomainError, FluflowError, SchemaError, ShapeError
from .pca import attribution_matrix, fit_pca, transform
from .regress import (
    P_THRESHOLD,
    bootstrap_cv,
    fit_rectified,
    match_features,
    ols_fit,
    select_features,
)
from .rng import stream_rng
from .spectral import dft, dominant_period


# ===================================================================
# configuration
# ===================================================================

@dataclass(frozen=True)
class FeatureParams:
    """Knobs for the feature-extraction stage.

    A non-empty candidates tuple turns on width selection and overrides
    bottleneck; n_components 0 keeps every bottleneck coordinate as a
    regression feature.
    """

    bottleneck: int = 10
    candidates: tuple = ()
    n_hidden: int = 1
    epochs: int = 2000
    batch_size: int = 32
    learning_rate: float = 0.05
    n_components: int = 0
    top_m: int = 10
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(int(k) for k in self.candidates))
        if self.bottleneck < 1:
            raise DomainError("bottleneck must be at least 1")
        if self.n_components < 0 or self.top_m < 0:
            raise DomainError("n_components and top_m must be non-negative")


STAGES = ("impute", "spectrum", "validate", "extract", "fit", "report")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a full run needs; file paths plus per-stage knobs.

    Empty weekly / labels / flow paths disable the stages that consume
    them.  seed must be given explicitly so a config alone reproduces a
    run bit for bit.
    """

    panel: str
    mortality: str
    out_dir: str
    seed: int
    weekly: str = ""
    flow_m: str = ""
    flow_t: str = ""
    labels: str = ""
    completion: CompletionConfig = field(default_factory=CompletionConfig)
    features: FeatureParams = field(default_factory=FeatureParams)
    svm_lam: float = 0.01
    svm_epochs: int = 300
    svm_threshold: float = 0.9
    p_threshold: float = P_THRESHOLD
    rate_floor: bool = False
    spectrum_min_k: int = 2
    spectrum_global: bool = True
    n_boot: int = 200
    report_regions: tuple = ()
    skip: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "report_regions", tuple(self.report_regions))
        object.__setattr__(self, "skip", tuple(self.skip))
        if self.seed is None:
            raise SchemaError("seed is required; there is no wall-clock default")
        for name in self.skip:
            if name not in STAGES:
                raise SchemaError("unknown stage in skip list: %s" % name)

    @property
    def has_flows(self):
        return bool(self.flow_m) and bool(self.flow_t)


def validate_config(config):
    """Check every referenced input path before any stage runs."""
    paths = [("panel", config.panel), ("mortality", config.mortality)]
    for name, value in (
        ("weekly", config.weekly),
        ("flow_m", config.flow_m),
        ("flow_t", config.flow_t),
        ("labels", config.labels),
    ):
        if value:
            paths.append((name, value))
    if bool(config.flow_m) != bool(config.flow_t):
        raise SchemaError("flow_m and flow_t must be given together")
    for name, value in paths:
        if not value:
            raise SchemaError("input '%s' is required" % name)
        if not os.path.isfile(value):
            raise SchemaError("input '%s' does not exist: %s" % (name, value))


# ===================================================================
# feature extraction bundle
# ===================================================================

@dataclass(frozen=True)
class FeatureBundle:
    """Everything the extraction stage produces, kept together because
    downstream consumers (attribution, robustness matching) need the
    trained models, not just the feature table."""

    standardized: object
    completion: object
    autoencoder: object
    pca: object
    features: FeatureMatrix
    attributions: np.ndarray
    bic_table: tuple = ()

    def __post_init__(self):
        attr = np.asarray(self.attributions, dtype=float)
        attr.setflags(write=False)
        object.__setattr__(self, "attributions", attr)


def _core_extract(X, params):
    """Autoencoder + PCA half shared by the in-memory and file paths."""
    d = X.shape[1]
    bic_table = ()
    width = params.bottleneck
    if params.candidates:
        width, bic_table = select_bottleneck(
            X,
            params.candidates,
            n_hidden=params.n_hidden,
            seed=params.seed,
            epochs=params.epochs,
            batch_size=params.batch_size,
            learning_rate=params.learning_rate,
        )
    spec = AutoencoderSpec(
        layer_sizes=geometric_layer_schedule(d, width, params.n_hidden),
        seed=params.seed,
        epochs=params.epochs,
        batch_size=params.batch_size,
        learning_rate=params.learning_rate,
    )
    model = train_autoencoder(X, spec)
    codes = encode(model, X)
    n_comp = params.n_components if params.n_components else width
    if n_comp > width:
        raise DomainError("n_components %d exceeds bottleneck width %d" % (n_comp, width))
    pca = fit_pca(codes, n_comp)
    scores = transform(pca, codes)
    attr = attribution_matrix(pca, model, X)
    return model, pca, scores, attr, bic_table


def extract_features(panel, params=None, completion_config=None):
    """Standardize, complete, encode, orthogonalize; one call for the
    whole unsupervised half of the model."""
    if params is None:
        params = FeatureParams()
    std = standardize_columns(panel)
    comp = soft_impute(std.panel, completion_config)
    model, pca, scores, attr, bic_table = _core_extract(comp.completed, params)
    features = feature_matrix_from_scores(std.panel.regions, scores)
    return FeatureBundle(std, comp, model, pca, features, attr, bic_table)


# ===================================================================
# robustness protocol
# ===================================================================

@dataclass(frozen=True)
class TrialResult:
    kind: str              # "column" or "row"
    index: int
    perturbation: float    # max relative weight change; inf when unmatched
    matched: bool
    cosines: tuple

    def __post_init__(self):
        object.__setattr__(self, "cosines", tuple(float(c) for c in self.cosines))


@dataclass(frozen=True)
class RobustnessResult:
    trials: tuple
    max_perturbation: float


def _full_fit(bundle, z, flows):
    if flows is not None:
        return fit_rectified(bundle.features, z, flows)
    return ols_fit(bundle.features, z)


def _attr_by_name(bundle):
    names = bundle.standardized.panel.indicators
    return {name: bundle.attributions[:, j] for j, name in enumerate(names)}


def _common_attr(base_bundle, pert_bundle):
    base_names = base_bundle.standardized.panel.indicators
    pert_cols = _attr_by_name(pert_bundle)
    common = [name for name in base_names if name in pert_cols]
    if not common:
        raise DomainError("no shared indicators between baseline and perturbed runs")
    base_cols = _attr_by_name(base_bundle)
    A = np.column_stack([base_cols[name] for name in common])
    B = np.column_stack([pert_cols[name] for name in common])
    return A, B


def _trial_perturbation(kind, index, base, pert, kept, z_len):
    """Match features by attribution direction and compare weights.

    base / pert are (bundle, fit) pairs from the full pre-filter fits;
    kept holds the baseline surviving feature indices (0-based).  Sign
    indeterminacy of learned features is resolved by correlating score
    columns over the regions the two runs share.
    """
    base_bundle, base_fit = base
    pert_bundle, pert_fit = pert
    A, B = _common_attr(base_bundle, pert_bundle)
    matches = match_features(A, B)
    worst = 0.0
    matched = True
    cosines = []
    for j in kept:
        target, cosine, ambiguous = matches[j]
        cosines.append(cosine)
        if ambiguous:
            matched = False
            continue
        base_scores = base_bundle.features.B[:z_len, j + 1]
        pert_scores = pert_bundle.features.B[:z_len, target + 1]
        sign = 1.0 if float(base_scores @ pert_scores) >= 0 else -1.0
        a_base = float(base_fit.a[j + 1])
        a_pert = sign * float(pert_fit.a[target + 1])
        if a_base == 0.0:
            matched = False
            continue
        worst = max(worst, abs(a_pert - a_base) / abs(a_base))
    perturbation = worst if matched else math.inf
    return TrialResult(kind, index, perturbation, matched, cosines)


def robustness_test(config, panel, z, flows, n_trials, seed):
    """Perturb the inputs and measure how much surviving weights move.

    Each trial appends either one standard-normal indicator column or
    one synthetic region row (fully observed, with a mortality value on
    the baseline regression surface and zero flows), then reruns the
    whole extraction and fit.  Weights are compared feature by feature
    after attribution matching.
    """
    if n_trials < 1:
        raise DomainError("n_trials must be at least 1")
    if panel.regions != z.regions:
        raise ShapeError("panel and mortality vector disagree on regions")
    base_bundle = extract_features(panel, config.features, config.completion)
    base_fit = _full_fit(base_bundle, z, flows)
    selection = select_features(base_fit, base_bundle.features, z, flows, threshold=config.p_threshold)
    if not selection.kept:
        raise DomainError("baseline keeps no features; robustness is undefined")
    kept = selection.kept
    n = len(panel.regions)

    trials = []
    for i in range(n_trials):
        rng = stream_rng(seed, "column", i)
        noisy = append_indicator_column(panel, "noise_%04d" % i, rng.standard_normal(n))
        pert_bundle = extract_features(noisy, config.features, config.completion)
        pert_fit = _full_fit(pert_bundle, z, flows)
        trials.append(
            _trial_perturbation("column", i, (base_bundle, base_fit), (pert_bundle, pert_fit), kept, n)
        )

        rng = stream_rng(seed, "row", i)
        code = "ZX%04d" % i
        row = np.zeros(len(panel.indicators))
        for j in range(len(panel.indicators)):
            obs = panel.values[panel.mask[:, j], j]
            if obs.size >= 2:
                row[j] = float(obs.mean() + obs.std() * rng.standard_normal())
            elif obs.size:
                row[j] = float(obs.mean())
        grown = append_region_row(panel, code, row)
        z_new = _surface_mortality(base_bundle, base_fit, panel, row)
        z_aug = MortalityVector(
            z.regions + (code,),
            np.append(z.z, z_new),
            np.append(z.raw_rate, math.exp(min(max(z_new, -700.0), 700.0))),
        )
        flows_aug = _pad_flows(flows, code) if flows is not None else None
        pert_bundle = extract_features(grown, config.features, config.completion)
        pert_fit = _full_fit(pert_bundle, z_aug, flows_aug)
        trials.append(
            _trial_perturbation("row", i, (base_bundle, base_fit), (pert_bundle, pert_fit), kept, n)
        )

    worst = max(t.perturbation for t in trials)
    return RobustnessResult(tuple(trials), worst)


def _surface_mortality(bundle, fit, raw_panel, raw_row):
    """Mortality for a fresh region placed exactly on the fitted surface.

    The new row passes through the baseline transforms: standardize with
    the baseline column statistics, encode, project, rescale by the
    baseline score spread, then evaluate the fitted linear part.  Zero
    flows make the flow term vanish for this region, so the linear part
    is the whole prediction.
    """
    raw_idx = {name: j for j, name in enumerate(raw_panel.indicators)}
    kept_names = bundle.standardized.panel.indicators
    means = bundle.standardized.means
    stds = bundle.standardized.stds
    x = np.zeros(len(kept_names))
    for k, name in enumerate(kept_names):
        x[k] = (raw_row[raw_idx[name]] - means[k]) / stds[k]
    code = encode(bundle.autoencoder, x[None, :])
    score = transform(bundle.pca, code)[0]
    base_scores = transform(bundle.pca, encode(bundle.autoencoder, bundle.completion.completed))
    scale = base_scores.std(axis=0, ddof=1)
    f = score / scale
    return float(fit.a[0] + fit.a[1:] @ f)


def _pad_flows(flows, code):
    n = len(flows.regions)
    m = np.zeros((n + 1, n + 1))
    t = np.zeros((n + 1, n + 1))
    m[:n, :n] = flows.m
    t[:n, :n] = flows.t
    return FlowPair(flows.regions + (code,), m, t)


# ===================================================================
# manifest
# ===================================================================

@dataclass(frozen=True)
class ManifestEntry:
    name: str
    sha256: str
    status: str  # "written" or "cached"


@dataclass(frozen=True)
class Manifest:
    out_dir: str
    entries: tuple

    def names(self):
        return tuple(e.name for e in self.entries)

    def path(self, name):
        return os.path.join(self.out_dir, name)

    def has(self, name):
        return any(e.name == name for e in self.entries)


def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(manifest):
    path = os.path.join(manifest.out_dir, "manifest.txt")
    with open(path, "w", encoding="utf-8") as fh:
        for entry in manifest.entries:
            fh.write("%s %s %s\n" % (entry.sha256, entry.name, entry.status))
    return path


def load_manifest(out_dir):
    path = os.path.join(out_dir, "manifest.txt")
    if not os.path.isfile(path):
        raise SchemaError("no manifest at %s" % path)
    entries = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            parts = line.split()
            if len(parts) != 3:
                raise SchemaError("manifest line %d: expected 'hash name status'" % (i + 1))
            entries.append(ManifestEntry(parts[1], parts[0], parts[2]))
    return Manifest(out_dir, tuple(entries))


# ===================================================================
# stages
# ===================================================================

def _require(path):
    if not os.path.isfile(path):
        raise SchemaError("required artifact missing: %s (run the producing stage first)" % path)
    return path


def _kv_lines(pairs):
    return "".join("%s %s\n" % (k, v) for k, v in pairs)


def _write_text(out_dir, name, text):
    with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
        fh.write(text)
    return name


def stage_impute(config):
    panel = load_indicator_panel(config.panel)
    std = standardize_columns(panel)
    out = config.out_dir
    write_indicator_panel(std.panel, os.path.join(out, "standardized.csv"))
    result = soft_impute(std.panel, config.completion)
    write_indicator_panel(completed_panel(std.panel, result), os.path.join(out, "completed.csv"))
    dropped = ",".join(std.dropped) if std.dropped else "none"
    report = _kv_lines(
        [
            ("rank", result.rank),
            ("train_rmse", fmt(result.train_rmse)),
            ("iterations", result.iterations),
            ("converged", "true" if result.converged else "false"),
            ("lambda_stages", len(result.lambda_path)),
            ("dropped_columns", dropped),
        ]
    )
    _write_text(out, "impute_report.txt", report)
    return ["standardized.csv", "completed.csv", "impute_report.txt"]


def stage_spectrum(config):
    series_map = load_weekly_activity(config.weekly)
    if config.spectrum_global:
        series_list = [merge_weekly_global(series_map)]
    else:
        series_list = [series_map[r] for r in sorted(series_map)]
    rows = ["region,k,magnitude\n"]
    blocks = []
    for series in series_list:
        spectrum = dft(series)
        mags = spectrum.magnitudes()
        for k in range(1, len(mags) + 1):
            rows.append("%s,%d,%s\n" % (series.region, k, fmt(mags[k - 1])))
        period, peak_k, ratio = dominant_period(spectrum, min_k=config.spectrum_min_k)
        blocks.append(
            _kv_lines(
                [
                    ("region", series.region),
                    ("period", fmt(period)),
                    ("peak_k", peak_k),
                    ("peak_ratio", fmt(ratio)),
                ]
            )
        )
    _write_text(config.out_dir, "spectrum.csv", "".join(rows))
    _write_text(config.out_dir, "period.txt", "\n".join(blocks))
    return ["spectrum.csv", "period.txt"]


def stage_validate(config):
    out = config.out_dir
    std_panel = load_indicator_panel(_require(os.path.join(out, "standardized.csv")))
    completed = load_indicator_panel(_require(os.path.join(out, "completed.csv")))
    labels = restrict_labels(load_labels(config.labels), std_panel.regions)
    acc_raw, acc_comp, passed = completion_consistency_check(
        std_panel,
        completed.values,
        labels,
        lam=config.svm_lam,
        epochs=config.svm_epochs,
        seed=config.seed,
        threshold=config.svm_threshold,
    )
    report = _kv_lines(
        [
            ("accuracy_raw", fmt(acc_raw)),
            ("accuracy_completed", fmt(acc_comp)),
            ("threshold", fmt(config.svm_threshold)),
            ("passed", "true" if passed else "false"),
        ]
    )
    _write_text(out, "svm_report.txt", report)
    return ["svm_report.txt"]


def stage_extract(config):
    out = config.out_dir
    completed = load_indicator_panel(_require(os.path.join(out, "completed.csv")))
    X = completed.values
    model, pca, scores, attr, bic_table = _core_extract(X, config.features)
    files = []
    save_autoencoder(model, os.path.join(out, "autoencoder.bin"))
    files.append("autoencoder.bin")
    features = feature_matrix_from_scores(completed.regions, scores)
    write_feature_matrix(features, os.path.join(out, "features.csv"))
    files.append("features.csv")
    names = completed.indicators
    for c in range(attr.shape[0]):
        order = np.argsort(-attr[c], kind="stable")
        lines = ["indicator,attribution\n"]
        lines += ["%s,%s\n" % (names[j], fmt(attr[c, j])) for j in order]
        files.append(_write_text(out, "feature_%d.csv" % (c + 1), "".join(lines)))
    if bic_table:
        lines = ["k,loss,bic\n"]
        lines += ["%d,%s,%s\n" % (k, fmt(loss), fmt(score)) for k, loss, score in bic_table]
        files.append(_write_text(out, "bic.csv", "".join(lines)))
    report = _kv_lines(
        [
            ("bottleneck", model.bottleneck),
            ("final_loss", fmt(model.final_loss)),
            ("n_components", attr.shape[0]),
            ("selection", "bic" if bic_table else "fixed"),
        ]
    )
    _write_text(out, "extract_report.txt", report)
    files.append("extract_report.txt")
    return files


def _load_flow_pair(config, regions):
    regions_m, m = load_flow_matrix(config.flow_m)
    regions_t, t = load_flow_matrix(config.flow_t)
    if regions_m != regions_t:
        raise SchemaError("flow matrices disagree on regions")
    missing = [r for r in regions if r not in regions_m]
    if missing:
        raise SchemaError("flow matrices lack region '%s'" % missing[0])
    return restrict_flows(FlowPair(regions_m, m, t), regions)


def _fit_lines(a, kernel, p_vals, rss, feature_names, extra=()):
    pairs = [("a_0", fmt(a[0]))]
    pairs += [("a_%s" % name, fmt(v)) for name, v in zip(feature_names, a[1:])]
    pairs += [("alpha_%d" % i, fmt(kernel.alpha[i])) for i in range(4)]
    pairs += [("beta_%d" % i, fmt(kernel.beta[i])) for i in range(4)]
    pairs += [("p_%s" % name, fmt(p)) for name, p in zip(feature_names, p_vals)]
    pairs.append(("rss", fmt(rss)))
    pairs += list(extra)
    return _kv_lines(pairs)


def stage_fit(config, mode="auto"):
    out = config.out_dir
    features = load_feature_matrix(_require(os.path.join(out, "features.csv")))
    z_all = normalize_mortality(load_mortality_rates(config.mortality), config.rate_floor)
    missing = [r for r in features.regions if r not in z_all.regions]
    if missing:
        raise SchemaError("mortality file lacks region '%s'" % missing[0])
    z = restrict_mortality(z_all, features.regions)
    if mode not in ("auto", "plain", "rectified"):
        raise SchemaError("unknown fit mode '%s'" % mode)
    if mode == "rectified" and not config.has_flows:
        raise SchemaError("rectified fit needs flow_m and flow_t inputs")
    flows = _load_flow_pair(config, features.regions) if config.has_flows else None

    model_flows = flows if mode != "plain" else None
    if model_flows is not None:
        fit = fit_rectified(features, z, model_flows)
    else:
        fit = ols_fit(features, z)
    names = ["feature_%d" % (j + 1) for j in range(features.n_features)]
    selection = select_features(fit, features, z, model_flows, threshold=config.p_threshold)

    files = []
    extra = []
    boot = None
    if flows is not None:
        boot = bootstrap_cv(features, z, flows, n_boot=config.n_boot, seed=config.seed)
        extra.append(("bootstrap_skipped", boot.skipped))
    _write_text(out, "out.txt", _fit_lines(fit.a, fit.kernel, fit.p_values, fit.rss, names, extra))
    files.append("out.txt")

    kept_names = ["feature_%d" % (j + 1) for j in selection.kept]
    sel_extra = [("kept", ",".join(kept_names) if kept_names else "none")]
    if selection.note:
        sel_extra.append(("note", selection.note))
    _write_text(
        out,
        "out_selected.txt",
        _fit_lines(
            selection.fit.a,
            selection.fit.kernel,
            selection.fit.p_values,
            selection.fit.rss,
            kept_names,
            sel_extra,
        ),
    )
    files.append("out_selected.txt")

    lines = [
        "%s %s\n" % (region, fmt(res))
        for region, res in zip(features.regions, selection.fit.residuals)
    ]
    _write_text(out, "residual.txt", "".join(lines))
    files.append("residual.txt")

    if boot is not None:
        rows = ["replicate,mse_plain,mse_rectified\n"]
        for i, (mp, mr) in enumerate(zip(boot.plain.samples, boot.rectified.samples)):
            rows.append("%d,%s,%s\n" % (i, fmt(mp), fmt(mr)))
        _write_text(out, "bootstrap.csv", "".join(rows))
        files.append("bootstrap.csv")
    return files


_STAGE_RUNNERS = {
    "impute": stage_impute,
    "spectrum": stage_spectrum,
    "validate": stage_validate,
    "extract": stage_extract,
    "fit": stage_fit,
}

_STAGE_OUTPUTS = {
    "impute": (("standardized.csv", "completed.csv", "impute_report.txt"), ()),
    "spectrum": (("spectrum.csv", "period.txt"), ()),
    "validate": (("svm_report.txt",), ()),
    "extract": (("autoencoder.bin", "features.csv", "extract_report.txt"), ("feature_*.csv", "bic.csv")),
    "fit": (("out.txt", "out_selected.txt", "residual.txt"), ("bootstrap.csv",)),
    "report": (("report.txt",), ()),
}


def _stage_enabled(name, config):
    if name == "spectrum":
        return bool(config.weekly)
    if name == "validate":
        return bool(config.labels)
    return True


def _cached_outputs(name, out_dir):
    required, optional = _STAGE_OUTPUTS[name]
    for base in required:
        if not os.path.isfile(os.path.join(out_dir, base)):
            raise SchemaError(
                "stage %s is skipped but its output %s is missing" % (name, base)
            )
    found = list(required)
    listing = sorted(os.listdir(out_dir))
    for pattern in optional:
        found += [f for f in listing if fnmatch.fnmatch(f, pattern)]
    return found


def run_pipeline(config):
    """Run every enabled stage in order and manifest all artifacts.

    Stage errors abort the run, re-raised with the stage name prefixed
    so the diagnostic names where the pipeline stopped.  Skipped stages
    must already have their outputs in the output directory; those
    files enter the manifest as 'cached'.
    """
    validate_config(config)
    os.makedirs(config.out_dir, exist_ok=True)
    entries = []
    for name in STAGES[:-1]:
        if not _stage_enabled(name, config):
            continue
        try:
            if name in config.skip:
                files, status = _cached_outputs(name, config.out_dir), "cached"
            else:
                files, status = _STAGE_RUNNERS[name](config), "written"
        except FluflowError as exc:
            raise type(exc)("stage %s: %s" % (name, exc)) from exc
        except OSError as exc:
            raise OSError("stage %s: %s" % (name, exc)) from exc
        for base in files:
            digest = file_sha256(os.path.join(config.out_dir, base))
            entries.append(ManifestEntry(base, digest, status))

    entries.sort(key=lambda e: e.name)
    partial = Manifest(config.out_dir, tuple(entries))
    if "report" in config.skip:
        _cached_outputs("report", config.out_dir)
        status = "cached"
    else:
        text = emit_report(partial, config.report_regions)
        _write_text(config.out_dir, "report.txt", text)
        status = "written"
    digest = file_sha256(os.path.join(config.out_dir, "report.txt"))
    entries.append(ManifestEntry("report.txt", digest, status))
    entries.sort(key=lambda e: e.name)
    manifest = Manifest(config.out_dir, tuple(entries))
    write_manifest(manifest)
    return manifest


# ===================================================================
# report
# ===================================================================

def _read_kv(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            key, _, value = line.partition(" ")
            out[key] = value
    return out


def _read_kv_blocks(path):
    blocks = []
    current = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                if current:
                    blocks.append(current)
                    current = {}
                continue
            key, _, value = line.partition(" ")
            current[key] = value
    if current:
        blocks.append(current)
    return blocks


def _read_csv_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows


def emit_report(manifest, regions=()):
    """Summarize the artifacts a run produced as plain text.

    Sections whose artifacts are missing from the manifest are marked
    as gaps instead of failing, so a report on a partial run still
    describes everything that exists.
    """
    lines = ["modeling run summary", "====================", ""]
    gap = "[gap] %s missing; section incomplete"

    lines.append("periodicity")
    lines.append("-----------")
    if manifest.has("period.txt"):
        for block in _read_kv_blocks(manifest.path("period.txt")):
            lines.append(
                "%s: period %s weeks (bin k=%s, peak ratio %s)"
                % (block["region"], block["period"], block["peak_k"], block["peak_ratio"])
            )
    else:
        lines.append(gap % "period.txt")
    lines.append("")

    lines.append("completion")
    lines.append("----------")
    if manifest.has("impute_report.txt"):
        kv = _read_kv(manifest.path("impute_report.txt"))
        lines.append(
            "rank %s, train rmse %s, %s iterations, converged %s"
            % (kv["rank"], kv["train_rmse"], kv["iterations"], kv["converged"])
        )
        if kv.get("dropped_columns", "none") != "none":
            lines.append("dropped constant columns: %s" % kv["dropped_columns"])
    else:
        lines.append(gap % "impute_report.txt")
    lines.append("")

    lines.append("classification check")
    lines.append("--------------------")
    if manifest.has("svm_report.txt"):
        kv = _read_kv(manifest.path("svm_report.txt"))
        verdict = "pass" if kv["passed"] == "true" else "FAIL"
        lines.append(
            "raw accuracy %s, completed accuracy %s, threshold %s: %s"
            % (kv["accuracy_raw"], kv["accuracy_completed"], kv["threshold"], verdict)
        )
    else:
        lines.append(gap % "svm_report.txt")
    lines.append("")

    lines.append("features")
    lines.append("--------")
    if manifest.has("extract_report.txt"):
        kv = _read_kv(manifest.path("extract_report.txt"))
        chosen = "selected by information criterion" if kv["selection"] == "bic" else "fixed"
        lines.append(
            "bottleneck width %s (%s), final loss %s, %s components retained"
            % (kv["bottleneck"], chosen, kv["final_loss"], kv["n_components"])
        )
        if manifest.has("bic.csv"):
            lines.append("criterion table (k, loss, bic):")
            for row in _read_csv_rows(manifest.path("bic.csv"))[1:]:
                lines.append("  k=%s loss=%s bic=%s" % (row[0], row[1], row[2]))
        n_comp = int(kv["n_components"])
        for c in range(1, n_comp + 1):
            name = "feature_%d.csv" % c
            if manifest.has(name):
                rows = _read_csv_rows(manifest.path(name))[1:4]
                tops = ", ".join("%s (%s)" % (r[0], r[1]) for r in rows)
                lines.append("feature_%d top indicators: %s" % (c, tops))
    else:
        lines.append(gap % "extract_report.txt")
    lines.append("")

    lines.append("regression")
    lines.append("----------")
    if manifest.has("out_selected.txt"):
        kv = _read_kv(manifest.path("out_selected.txt"))
        kept = kv.get("kept", "none")
        if kept == "none":
            lines.append("no feature survives the p-value filter")
            if "note" in kv:
                lines.append("note: %s" % kv["note"])
        else:
            lines.append("surviving features (weight, p-value):")
            for name in kept.split(","):
                lines.append(
                    "  %s: a=%s p=%s" % (name, kv["a_" + name], kv["p_" + name])
                )
        lines.append("intercept a_0 = %s" % kv["a_0"])
        kernel_vals = [float(kv["alpha_%d" % i]) for i in range(4)]
        kernel_vals += [float(kv["beta_%d" % i]) for i in range(4)]
        if max(abs(v) for v in kernel_vals) == 0.0:
            lines.append("kernel: no flow effect")
        else:
            lines.append(
                "kernel: alpha [%s], beta [%s]"
                % (
                    ", ".join(kv["alpha_%d" % i] for i in range(4)),
                    ", ".join(kv["beta_%d" % i] for i in range(4)),
                )
            )
        lines.append("residual sum of squares %s" % kv["rss"])
    else:
        lines.append(gap % "out_selected.txt")
    lines.append("")

    lines.append("bootstrap comparison")
    lines.append("--------------------")
    if manifest.has("bootstrap.csv"):
        rows = _read_csv_rows(manifest.path("bootstrap.csv"))[1:]
        plain = np.array([float(r[1]) for r in rows])
        rect = np.array([float(r[2]) for r in rows])
        lines.append(
            "plain model oob mse %s +- %s over %d replicates"
            % (fmt(plain.mean()), fmt(plain.std(ddof=1)), plain.size)
        )
        lines.append(
            "rectified model oob mse %s +- %s" % (fmt(rect.mean()), fmt(rect.std(ddof=1)))
        )
    else:
        lines.append(gap % "bootstrap.csv")
    lines.append("")

    if regions:
        lines.append("per-region feature values")
        lines.append("-------------------------")
        if manifest.has("features.csv") and manifest.has("out_selected.txt"):
            kv = _read_kv(manifest.path("out_selected.txt"))
            kept = kv.get("kept", "none")
            kept_names = kept.split(",") if kept != "none" else []
            rows = _read_csv_rows(manifest.path("features.csv"))
            header = rows[0]
            table = {r[0]: r[1:] for r in rows[1:]}
            for code in regions:
                if code not in table:
                    lines.append("[gap] region %s not in features.csv" % code)
                    continue
                vals = []
                for name in kept_names:
                    j = header.index(name) - 1
                    vals.append("%s %s" % (name, table[code][j]))
                lines.append("%s: %s" % (code, ", ".join(vals) if vals else "no surviving features"))
        else:
            lines.append(gap % "features.csv or out_selected.txt")
        lines.append("")

    return "\n".join(lines) + "\n"
