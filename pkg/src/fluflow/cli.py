"""Command-line front end.

Every subcommand is a thin wrapper over a pipeline stage or a library
call; the configuration file is a plain INI whose sections mirror the
stage parameter groups.  Exit codes: 0 success, 1 validation problem,
2 numeric failure, 3 I/O failure.
"""

import argparse
import configparser
import math
import os
import sys

from .completion import CompletionConfig
from .data import (
    fmt,
    load_feature_matrix,
    load_flow_matrix,
    load_indicator_panel,
    load_mortality_rates,
    normalize_mortality,
    restrict_flows,
    restrict_mortality,
    write_flow_matrix,
    write_indicator_panel,
    write_labels,
    write_mortality_rates,
    write_weekly_activity,
    FlowPair,
)
from .errors import FluflowError, ParseError, SchemaError
from .pipeline import (
    FeatureParams,
    PipelineConfig,
    emit_report,
    load_manifest,
    robustness_test,
    run_pipeline,
    stage_extract,
    stage_fit,
    stage_impute,
    stage_spectrum,
    stage_validate,
)
from .regress import bootstrap_cv
from .synth import gen_periodic_series, gen_planted_world


# ===================================================================
# configuration file
# ===================================================================

_BOOL_TOKENS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _parse_bool(text, where):
    token = text.strip().lower()
    if token not in _BOOL_TOKENS:
        raise ParseError("%s: expected a boolean, found '%s'" % (where, text))
    return _BOOL_TOKENS[token]


def _parse_int(text, where):
    try:
        return int(text)
    except ValueError:
        raise ParseError("%s: expected an integer, found '%s'" % (where, text)) from None


def _parse_float(text, where):
    try:
        value = float(text)
    except ValueError:
        raise ParseError("%s: expected a number, found '%s'" % (where, text)) from None
    if math.isnan(value) or math.isinf(value):
        raise ParseError("%s: value must be finite" % where)
    return value


def _parse_list(text, _where):
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _parse_int_list(text, where):
    return tuple(_parse_int(part, where) for part in _parse_list(text, where))


_CONFIG_SCHEMA = {
    "inputs": {
        "panel": str,
        "mortality": str,
        "weekly": str,
        "flow_m": str,
        "flow_t": str,
        "labels": str,
    },
    "output": {"dir": str},
    "pipeline": {"seed": _parse_int, "skip": _parse_list, "report_regions": _parse_list},
    "completion": {
        "max_rank": _parse_int,
        "tol": _parse_float,
        "max_iter": _parse_int,
        "polish": _parse_bool,
    },
    "autoencoder": {
        "bottleneck": _parse_int,
        "candidates": _parse_int_list,
        "n_hidden": _parse_int,
        "epochs": _parse_int,
        "batch_size": _parse_int,
        "learning_rate": _parse_float,
        "seed": _parse_int,
    },
    "pca": {"n_components": _parse_int, "top_m": _parse_int},
    "svm": {"lam": _parse_float, "epochs": _parse_int, "threshold": _parse_float},
    "regression": {"p_threshold": _parse_float, "rate_floor": _parse_bool},
    "bootstrap": {"n_boot": _parse_int},
    "spectrum": {"min_k": _parse_int, "global": _parse_bool},
}


def read_config_file(path):
    """Parse an INI config into {section: {key: typed value}}, strictly."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ParseError("%s: %s" % (path, exc)) from None
    out = {}
    for section in parser.sections():
        if section not in _CONFIG_SCHEMA:
            raise SchemaError("%s: unknown section [%s]" % (path, section))
        schema = _CONFIG_SCHEMA[section]
        values = {}
        for key, raw in parser.items(section):
            if key not in schema:
                raise SchemaError("%s: unknown key '%s' in [%s]" % (path, key, section))
            kind = schema[key]
            where = "%s [%s] %s" % (path, section, key)
            values[key] = raw if kind is str else kind(raw, where)
        out[section] = values
    return out


def _resolve(base_dir, path):
    if not path or os.path.isabs(path):
        return path
    return os.path.normpath(os.path.join(base_dir, path))


def build_config(args):
    """Merge config file, global flags, and subcommand flags."""
    sections = {}
    base_dir = "."
    if getattr(args, "config", None):
        sections = read_config_file(args.config)
        base_dir = os.path.dirname(os.path.abspath(args.config))
    inputs = sections.get("inputs", {})
    pipeline_kv = sections.get("pipeline", {})

    def pick(flag_name, section_key, default=""):
        flag = getattr(args, flag_name, None)
        if flag is not None:
            return flag
        return _resolve(base_dir, inputs.get(section_key, default))

    seed = getattr(args, "seed", None)
    if seed is None:
        seed = pipeline_kv.get("seed")
    if seed is None:
        seed = 0

    out_dir = getattr(args, "out", None)
    if out_dir is None:
        out_dir = _resolve(base_dir, sections.get("output", {}).get("dir", "out"))

    comp_kv = dict(sections.get("completion", {}))
    completion = CompletionConfig(
        max_rank=comp_kv.get("max_rank"),
        tol=comp_kv.get("tol", 1e-5),
        max_iter=comp_kv.get("max_iter", 200),
        polish=comp_kv.get("polish", True),
    )

    ae_kv = dict(sections.get("autoencoder", {}))
    pca_kv = dict(sections.get("pca", {}))
    bottleneck = getattr(args, "bottleneck", None)
    if bottleneck is None:
        bottleneck = ae_kv.get("bottleneck", 10)
    candidates = getattr(args, "candidates", None)
    if candidates is None:
        candidates = ae_kv.get("candidates", ())
    features = FeatureParams(
        bottleneck=bottleneck,
        candidates=candidates,
        n_hidden=ae_kv.get("n_hidden", 1),
        epochs=ae_kv.get("epochs", 2000),
        batch_size=ae_kv.get("batch_size", 32),
        learning_rate=ae_kv.get("learning_rate", 0.05),
        n_components=pca_kv.get("n_components", 0),
        top_m=pca_kv.get("top_m", 10),
        seed=ae_kv.get("seed", seed),
    )

    svm_kv = sections.get("svm", {})
    reg_kv = sections.get("regression", {})
    boot_kv = sections.get("bootstrap", {})
    spec_kv = sections.get("spectrum", {})

    spectrum_global = getattr(args, "spectrum_global", None)
    if spectrum_global is None:
        spectrum_global = spec_kv.get("global", True)
    min_k = getattr(args, "min_k", None)
    if min_k is None:
        min_k = spec_kv.get("min_k", 2)
    n_boot = getattr(args, "n_boot", None)
    if n_boot is None:
        n_boot = boot_kv.get("n_boot", 200)
    regions = getattr(args, "regions", None)
    if regions is None:
        regions = pipeline_kv.get("report_regions", ())

    return PipelineConfig(
        panel=pick("panel", "panel"),
        mortality=pick("mortality", "mortality"),
        out_dir=out_dir,
        seed=seed,
        weekly=pick("weekly", "weekly"),
        flow_m=pick("flow_m", "flow_m"),
        flow_t=pick("flow_t", "flow_t"),
        labels=pick("labels", "labels"),
        completion=completion,
        features=features,
        svm_lam=svm_kv.get("lam", 0.01),
        svm_epochs=svm_kv.get("epochs", 300),
        svm_threshold=svm_kv.get("threshold", 0.9),
        p_threshold=reg_kv.get("p_threshold", 0.05),
        rate_floor=reg_kv.get("rate_floor", False),
        spectrum_min_k=min_k,
        spectrum_global=spectrum_global,
        n_boot=n_boot,
        report_regions=regions,
        skip=pipeline_kv.get("skip", ()),
    )


# ===================================================================
# subcommands
# ===================================================================

def _require_input(name, value):
    if not value:
        raise SchemaError("input '%s' is required (flag or config [inputs] %s)" % (name, name))
    if not os.path.isfile(value):
        raise SchemaError("input '%s' does not exist: %s" % (name, value))


def _print_file(out_dir, name):
    with open(os.path.join(out_dir, name), encoding="utf-8") as fh:
        sys.stdout.write(fh.read())


def cmd_impute(args):
    config = build_config(args)
    _require_input("panel", config.panel)
    os.makedirs(config.out_dir, exist_ok=True)
    stage_impute(config)
    _print_file(config.out_dir, "impute_report.txt")
    return 0


def cmd_spectrum(args):
    config = build_config(args)
    _require_input("weekly", config.weekly)
    os.makedirs(config.out_dir, exist_ok=True)
    stage_spectrum(config)
    _print_file(config.out_dir, "period.txt")
    return 0


def cmd_validate_svm(args):
    config = build_config(args)
    _require_input("panel", config.panel)
    _require_input("labels", config.labels)
    os.makedirs(config.out_dir, exist_ok=True)
    stage_impute(config)
    files = stage_validate(config)
    _print_file(config.out_dir, files[0])
    with open(os.path.join(config.out_dir, files[0]), encoding="utf-8") as fh:
        passed = "passed true" in fh.read()
    return 0 if passed else 1


def cmd_extract_features(args):
    config = build_config(args)
    _require_input("panel", config.panel)
    os.makedirs(config.out_dir, exist_ok=True)
    if not os.path.isfile(os.path.join(config.out_dir, "completed.csv")):
        stage_impute(config)
    stage_extract(config)
    _print_file(config.out_dir, "extract_report.txt")
    return 0


def _cmd_fit_common(args, mode):
    config = build_config(args)
    _require_input("mortality", config.mortality)
    os.makedirs(config.out_dir, exist_ok=True)
    if not os.path.isfile(os.path.join(config.out_dir, "features.csv")):
        _require_input("panel", config.panel)
        stage_impute(config)
        stage_extract(config)
    stage_fit(config, mode=mode)
    _print_file(config.out_dir, "out_selected.txt")
    return 0


def cmd_fit(args):
    return _cmd_fit_common(args, "plain")


def cmd_fit_rectified(args):
    return _cmd_fit_common(args, "rectified")


def _load_inputs_for_regression(config):
    panel = load_indicator_panel(config.panel)
    z_all = normalize_mortality(load_mortality_rates(config.mortality), config.rate_floor)
    missing = [r for r in panel.regions if r not in z_all.regions]
    if missing:
        raise SchemaError("mortality file lacks region '%s'" % missing[0])
    z = restrict_mortality(z_all, panel.regions)
    flows = None
    if config.has_flows:
        regions_m, m = load_flow_matrix(config.flow_m)
        regions_t, t = load_flow_matrix(config.flow_t)
        if regions_m != regions_t:
            raise SchemaError("flow matrices disagree on regions")
        lacking = [r for r in panel.regions if r not in regions_m]
        if lacking:
            raise SchemaError("flow matrices lack region '%s'" % lacking[0])
        flows = restrict_flows(FlowPair(regions_m, m, t), panel.regions)
    return panel, z, flows


def cmd_bootstrap(args):
    config = build_config(args)
    _require_input("mortality", config.mortality)
    if not config.has_flows:
        raise SchemaError("bootstrap needs flow_m and flow_t inputs")
    _require_input("flow_m", config.flow_m)
    _require_input("flow_t", config.flow_t)
    os.makedirs(config.out_dir, exist_ok=True)
    if not os.path.isfile(os.path.join(config.out_dir, "features.csv")):
        _require_input("panel", config.panel)
        stage_impute(config)
        stage_extract(config)
    features = load_feature_matrix(os.path.join(config.out_dir, "features.csv"))
    z_all = normalize_mortality(load_mortality_rates(config.mortality), config.rate_floor)
    z = restrict_mortality(z_all, features.regions)
    regions_m, m = load_flow_matrix(config.flow_m)
    regions_t, t = load_flow_matrix(config.flow_t)
    if regions_m != regions_t:
        raise SchemaError("flow matrices disagree on regions")
    flows = restrict_flows(FlowPair(regions_m, m, t), features.regions)
    result = bootstrap_cv(features, z, flows, n_boot=config.n_boot, seed=config.seed)
    rows = ["replicate,mse_plain,mse_rectified\n"]
    for i, (mp, mr) in enumerate(zip(result.plain.samples, result.rectified.samples)):
        rows.append("%d,%s,%s\n" % (i, fmt(mp), fmt(mr)))
    with open(os.path.join(config.out_dir, "bootstrap.csv"), "w", encoding="utf-8") as fh:
        fh.write("".join(rows))
    print("plain_mean %s" % fmt(result.plain.mean))
    print("plain_std %s" % fmt(result.plain.std))
    print("rectified_mean %s" % fmt(result.rectified.mean))
    print("rectified_std %s" % fmt(result.rectified.std))
    print("skipped %d" % result.skipped)
    return 0


def cmd_robustness(args):
    config = build_config(args)
    _require_input("panel", config.panel)
    _require_input("mortality", config.mortality)
    os.makedirs(config.out_dir, exist_ok=True)
    panel, z, flows = _load_inputs_for_regression(config)
    result = robustness_test(config, panel, z, flows, args.n_trials, config.seed)
    lines = []
    for trial in result.trials:
        lines.append(
            "trial %s %d perturbation %s matched %s"
            % (trial.kind, trial.index, fmt(trial.perturbation), "true" if trial.matched else "false")
        )
    lines.append("max_perturbation %s" % fmt(result.max_perturbation))
    text = "\n".join(lines) + "\n"
    with open(os.path.join(config.out_dir, "robustness.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return 0


def cmd_synth(args):
    out_dir = args.out if args.out is not None else "out"
    seed = args.seed if args.seed is not None else 0
    os.makedirs(out_dir, exist_ok=True)
    world = gen_planted_world(
        args.n,
        args.d,
        args.k_features,
        args.kernel_scale,
        args.flow_density,
        seed,
        obs_frac=args.obs_frac,
        n_active=args.n_active,
        z_noise=args.z_noise,
        lift_strength=args.lift_strength,
        panel_noise=args.panel_noise,
    )
    series = gen_periodic_series(
        args.weeks, args.period, args.amplitude, args.weekly_noise, seed
    )

    def path(name):
        return os.path.join(out_dir, name)

    write_indicator_panel(world.panel, path("panel.csv"))
    write_mortality_rates(
        list(zip(world.z_observed.regions, world.z_observed.raw_rate)), path("mortality.csv")
    )
    write_flow_matrix(world.flows.regions, world.flows.m, path("flow_m.csv"))
    write_flow_matrix(world.flows.regions, world.flows.t, path("flow_t.csv"))
    write_labels(world.labels, path("labels.csv"))
    write_weekly_activity([series], path("weekly.csv"))

    pairs = [
        ("seed", seed),
        ("n", args.n),
        ("d", args.d),
        ("k_features", args.k_features),
        ("n_active", args.n_active if args.n_active is not None else args.k_features),
        ("kernel_scale", fmt(args.kernel_scale)),
        ("flow_density", fmt(args.flow_density)),
        ("obs_frac", fmt(args.obs_frac)),
        ("z_noise", fmt(args.z_noise)),
        ("lift_strength", fmt(args.lift_strength)),
        ("panel_noise", fmt(args.panel_noise)),
        ("kernel_rescales", world.kernel_rescales),
    ]
    pairs += [("a_%d" % j, fmt(world.true_a[j])) for j in range(world.true_a.size)]
    pairs += [("alpha_%d" % i, fmt(world.true_kernel.alpha[i])) for i in range(4)]
    pairs += [("beta_%d" % i, fmt(world.true_kernel.beta[i])) for i in range(4)]
    pairs += [("z_%s" % r, fmt(v)) for r, v in zip(world.z.regions, world.z.z)]
    with open(path("truth.txt"), "w", encoding="utf-8") as fh:
        for key, value in pairs:
            fh.write("%s %s\n" % (key, value))

    k = args.k_features
    # monomial lift spans 3k + k(k-1)/2 directions; column standardization
    # can add one more through the mean shift
    lift_rank = min(args.n - 1, args.d, 3 * k + k * (k - 1) // 2 + 1)
    cfg = [
        "[inputs]",
        "panel = panel.csv",
        "mortality = mortality.csv",
        "weekly = weekly.csv",
        "flow_m = flow_m.csv",
        "flow_t = flow_t.csv",
        "labels = labels.csv",
        "",
        "[output]",
        "dir = run",
        "",
        "[pipeline]",
        "seed = %d" % seed,
        "",
        "[completion]",
        "max_rank = %d" % lift_rank,
        "",
        "[autoencoder]",
        "bottleneck = %d" % k,
        "",
        "[bootstrap]",
        "n_boot = 200",
        "",
    ]
    with open(path("pipeline.cfg"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(cfg))

    for name in (
        "panel.csv",
        "mortality.csv",
        "flow_m.csv",
        "flow_t.csv",
        "labels.csv",
        "weekly.csv",
        "truth.txt",
        "pipeline.cfg",
    ):
        print("wrote %s" % path(name))
    return 0


def cmd_run(args):
    if not getattr(args, "config", None):
        raise SchemaError("run needs --config")
    config = build_config(args)
    manifest = run_pipeline(config)
    for entry in manifest.entries:
        print("%s %s %s" % (entry.sha256, entry.name, entry.status))
    print("manifest %s" % os.path.join(manifest.out_dir, "manifest.txt"))
    return 0


def cmd_report(args):
    config = build_config(args)
    manifest = load_manifest(config.out_dir)
    sys.stdout.write(emit_report(manifest, config.report_regions))
    return 0


# ===================================================================
# parser
# ===================================================================

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--seed", type=int, help="random seed (overrides config)")
    common.add_argument("--out", help="output directory (overrides config)")

    parser = argparse.ArgumentParser(
        prog="fluflow",
        description="Mortality modeling pipeline: completion, spectra, features, flow regression.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("impute", parents=[common], help="complete a sparse indicator panel")
    p.add_argument("--panel", help="indicator CSV")
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("spectrum", parents=[common], help="detect periodicity in weekly activity")
    p.add_argument("--weekly", help="weekly activity CSV")
    p.add_argument("--global", dest="spectrum_global", action="store_true", default=None,
                   help="sum regions into one global series (default)")
    p.add_argument("--per-region", dest="spectrum_global", action="store_false",
                   help="analyze each region separately")
    p.add_argument("--min-k", type=int, help="lowest frequency bin searched")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("validate-svm", parents=[common],
                       help="check that completion preserves class structure")
    p.add_argument("--panel", help="indicator CSV")
    p.add_argument("--labels", help="region,label CSV")
    p.set_defaults(func=cmd_validate_svm)

    p = sub.add_parser("extract-features", parents=[common],
                       help="train the autoencoder and emit orthogonal features")
    p.add_argument("--panel", help="indicator CSV")
    p.add_argument("--bottleneck", type=int, help="bottleneck width")
    p.add_argument("--candidates", type=lambda s: tuple(int(v) for v in s.split(",")),
                   help="comma list of widths; picks the information-criterion best")
    p.set_defaults(func=cmd_extract_features)

    p = sub.add_parser("fit", parents=[common], help="plain least-squares fit")
    p.add_argument("--panel", help="indicator CSV (used if features.csv is absent)")
    p.add_argument("--mortality", help="region,death_rate CSV")
    p.add_argument("--flow-m", dest="flow_m", help="migration flow CSV")
    p.add_argument("--flow-t", dest="flow_t", help="trade flow CSV")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("fit-rectified", parents=[common],
                       help="joint fit with the flow kernel")
    p.add_argument("--panel", help="indicator CSV (used if features.csv is absent)")
    p.add_argument("--mortality", help="region,death_rate CSV")
    p.add_argument("--flow-m", dest="flow_m", help="migration flow CSV")
    p.add_argument("--flow-t", dest="flow_t", help="trade flow CSV")
    p.set_defaults(func=cmd_fit_rectified)

    p = sub.add_parser("bootstrap", parents=[common],
                       help="out-of-bag comparison of plain vs rectified")
    p.add_argument("--panel", help="indicator CSV (used if features.csv is absent)")
    p.add_argument("--mortality", help="region,death_rate CSV")
    p.add_argument("--flow-m", dest="flow_m", help="migration flow CSV")
    p.add_argument("--flow-t", dest="flow_t", help="trade flow CSV")
    p.add_argument("--n-boot", type=int, help="bootstrap replicates (at least 100)")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("robustness", parents=[common],
                       help="input perturbation protocol")
    p.add_argument("--panel", help="indicator CSV")
    p.add_argument("--mortality", help="region,death_rate CSV")
    p.add_argument("--flow-m", dest="flow_m", help="migration flow CSV")
    p.add_argument("--flow-t", dest="flow_t", help="trade flow CSV")
    p.add_argument("--n-trials", type=int, default=1, help="perturbation rounds")
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic world")
    p.add_argument("--n", type=int, default=60, help="regions")
    p.add_argument("--d", type=int, default=30, help="indicators")
    p.add_argument("--k-features", dest="k_features", type=int, default=3)
    p.add_argument("--kernel-scale", dest="kernel_scale", type=float, default=0.3)
    p.add_argument("--flow-density", dest="flow_density", type=float, default=0.3)
    p.add_argument("--obs-frac", dest="obs_frac", type=float, default=0.85)
    p.add_argument("--n-active", dest="n_active", type=int, default=None)
    p.add_argument("--z-noise", dest="z_noise", type=float, default=0.0)
    p.add_argument("--lift-strength", dest="lift_strength", type=float, default=0.3)
    p.add_argument("--panel-noise", dest="panel_noise", type=float, default=0.0)
    p.add_argument("--weeks", type=int, default=260)
    p.add_argument("--period", type=float, default=52.0)
    p.add_argument("--amplitude", type=float, default=3.0)
    p.add_argument("--weekly-noise", dest="weekly_noise", type=float, default=0.4)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", parents=[common], help="run every stage and manifest the artifacts")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", parents=[common], help="summarize a finished run")
    p.add_argument("--regions", type=lambda s: tuple(s.split(",")),
                   help="comma list of regions for the contribution table")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if exc.code is not None else 0
        return 0 if code == 0 else 1
    try:
        return args.func(args)
    except FluflowError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
