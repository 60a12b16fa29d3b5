import hashlib
import os

import numpy as np
import pytest

from fluflow.completion import CompletionConfig
from fluflow.data import (
    write_flow_matrix,
    write_indicator_panel,
    write_labels,
    write_mortality_rates,
    write_weekly_activity,
)
from fluflow.errors import DomainError, SchemaError
from fluflow.pipeline import (
    FeatureParams,
    Manifest,
    PipelineConfig,
    emit_report,
    extract_features,
    file_sha256,
    load_manifest,
    robustness_test,
    run_pipeline,
    validate_config,
    write_manifest,
)
from fluflow.synth import gen_periodic_series, gen_planted_world


def _write_world(root, kernel_scale=0.25, flow_density=0.4, seed=5):
    world = gen_planted_world(n=40, d=12, k_features=2, kernel_scale=kernel_scale,
                              flow_density=flow_density, seed=seed,
                              obs_frac=0.95, z_noise=0.005, lift_strength=0.1)
    series = gen_periodic_series(156, 52, amplitude=3.0, noise_sigma=0.3, seed=seed)
    write_indicator_panel(world.panel, str(root / "panel.csv"))
    write_mortality_rates(
        list(zip(world.z_observed.regions, world.z_observed.raw_rate)),
        str(root / "mortality.csv"),
    )
    write_flow_matrix(world.flows.regions, world.flows.m, str(root / "flow_m.csv"))
    write_flow_matrix(world.flows.regions, world.flows.t, str(root / "flow_t.csv"))
    write_labels(world.labels, str(root / "labels.csv"))
    write_weekly_activity([series], str(root / "weekly.csv"))
    return world


def _config(root, out_name="run", **over):
    fields = dict(
        panel=str(root / "panel.csv"),
        mortality=str(root / "mortality.csv"),
        out_dir=str(root / out_name),
        seed=5,
        weekly=str(root / "weekly.csv"),
        flow_m=str(root / "flow_m.csv"),
        flow_t=str(root / "flow_t.csv"),
        labels=str(root / "labels.csv"),
        completion=CompletionConfig(max_rank=8),
        features=FeatureParams(bottleneck=2, epochs=1000, batch_size=16),
        n_boot=120,
    )
    fields.update(over)
    return PipelineConfig(**fields)


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    world = _write_world(root)
    config = _config(root)
    manifest = run_pipeline(config)
    return root, world, config, manifest


# -------------------------------------------------------------------
# configuration
# -------------------------------------------------------------------

def test_config_requires_seed():
    with pytest.raises(SchemaError):
        PipelineConfig(panel="p", mortality="m", out_dir="o", seed=None)


def test_config_rejects_unknown_skip_stage():
    with pytest.raises(SchemaError):
        PipelineConfig(panel="p", mortality="m", out_dir="o", seed=0, skip=("polish",))


def test_validate_config_names_missing_input(tmp_path):
    config = _config(tmp_path)
    with pytest.raises(SchemaError) as err:
        validate_config(config)
    assert "panel" in str(err.value)


def test_validate_config_requires_flow_pair(tmp_path):
    _write_world(tmp_path, seed=6)
    config = _config(tmp_path, flow_t="")
    with pytest.raises(SchemaError) as err:
        validate_config(config)
    assert "flow_m and flow_t" in str(err.value)


# -------------------------------------------------------------------
# in-memory extraction
# -------------------------------------------------------------------

def test_extract_features_bundle_shapes(tmp_path):
    world = _write_world(tmp_path, seed=7)
    params = FeatureParams(bottleneck=2, epochs=300, batch_size=16)
    bundle = extract_features(world.panel, params, CompletionConfig(max_rank=8))
    assert bundle.features.B.shape == (40, 3)
    assert bundle.features.regions == world.panel.regions
    n_kept = len(bundle.standardized.panel.indicators)
    assert bundle.attributions.shape == (2, n_kept)
    assert bundle.completion.completed.shape[0] == 40
    assert bundle.bic_table == ()


# -------------------------------------------------------------------
# full runs and manifests
# -------------------------------------------------------------------

EXPECTED_FILES = {
    "standardized.csv", "completed.csv", "impute_report.txt",
    "spectrum.csv", "period.txt",
    "svm_report.txt",
    "autoencoder.bin", "features.csv", "feature_1.csv", "feature_2.csv",
    "extract_report.txt",
    "out.txt", "out_selected.txt", "residual.txt", "bootstrap.csv",
    "report.txt",
}


def test_run_writes_expected_artifact_set(finished_run):
    root, _, config, manifest = finished_run
    assert set(manifest.names()) == EXPECTED_FILES
    assert all(e.status == "written" for e in manifest.entries)
    for name in manifest.names():
        assert os.path.isfile(manifest.path(name))
    assert os.path.isfile(os.path.join(config.out_dir, "manifest.txt"))


def test_manifest_names_sorted(finished_run):
    _, _, _, manifest = finished_run
    assert list(manifest.names()) == sorted(manifest.names())


def test_run_is_deterministic(finished_run):
    root, _, config, manifest = finished_run
    again = run_pipeline(_config(root, out_name="run2"))
    first = {e.name: e.sha256 for e in manifest.entries}
    second = {e.name: e.sha256 for e in again.entries}
    assert first == second


def test_skip_reuses_cached_outputs(finished_run):
    root, _, config, _ = finished_run
    rerun = run_pipeline(_config(root, skip=("impute", "extract")))
    status = {e.name: e.status for e in rerun.entries}
    assert status["completed.csv"] == "cached"
    assert status["impute_report.txt"] == "cached"
    assert status["autoencoder.bin"] == "cached"
    assert status["feature_1.csv"] == "cached"
    assert status["out.txt"] == "written"
    assert status["report.txt"] == "written"


def test_skip_without_outputs_fails(tmp_path):
    _write_world(tmp_path, seed=8)
    config = _config(tmp_path, skip=("impute",))
    with pytest.raises(SchemaError) as err:
        run_pipeline(config)
    assert "skipped but its output" in str(err.value)


def test_stage_errors_carry_stage_name(tmp_path):
    _write_world(tmp_path, seed=9)
    with open(tmp_path / "panel.csv", "w", encoding="utf-8") as fh:
        fh.write("region,ind_0\nAAA,not_a_number\nAAB,1.0\n")
    with pytest.raises(Exception) as err:
        run_pipeline(_config(tmp_path))
    assert str(err.value).startswith("stage impute:")


def test_inputs_checked_before_any_stage_runs(tmp_path):
    _write_world(tmp_path, seed=10)
    os.remove(tmp_path / "mortality.csv")
    config = _config(tmp_path)
    with pytest.raises(SchemaError) as err:
        run_pipeline(config)
    assert "mortality" in str(err.value)
    assert not os.path.isdir(config.out_dir)


# -------------------------------------------------------------------
# manifest file format
# -------------------------------------------------------------------

def test_file_sha256_matches_hashlib(tmp_path):
    path = tmp_path / "blob.bin"
    path.write_bytes(b"fluflow manifest check")
    assert file_sha256(str(path)) == hashlib.sha256(b"fluflow manifest check").hexdigest()


def test_manifest_round_trip(tmp_path):
    from fluflow.pipeline import ManifestEntry

    entries = (
        ManifestEntry("a.csv", "0" * 64, "written"),
        ManifestEntry("b.txt", "f" * 64, "cached"),
    )
    manifest = Manifest(str(tmp_path), entries)
    write_manifest(manifest)
    loaded = load_manifest(str(tmp_path))
    assert loaded.entries == entries


def test_manifest_rejects_malformed_line(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    (out / "manifest.txt").write_text("deadbeef only_two_fields\n")
    with pytest.raises(SchemaError):
        load_manifest(str(out))


def test_missing_manifest_is_an_error(tmp_path):
    with pytest.raises(SchemaError):
        load_manifest(str(tmp_path))


# -------------------------------------------------------------------
# report
# -------------------------------------------------------------------

def test_report_mentions_periodicity_and_fit(finished_run):
    _, _, config, manifest = finished_run
    text = open(manifest.path("report.txt"), encoding="utf-8").read()
    assert "periodicity" in text
    assert "period 52" in text
    assert "completion" in text
    assert "regression" in text
    assert "bootstrap comparison" in text
    assert "[gap]" not in text


def test_report_gap_markers_on_missing_artifacts(tmp_path):
    text = emit_report(Manifest(str(tmp_path), ()))
    assert text.count("[gap]") >= 4


def test_report_region_table(finished_run):
    _, world, _, manifest = finished_run
    text = emit_report(manifest, regions=("AAA", "ZZZ"))
    assert "per-region feature values" in text
    assert "\nAAA: " in text
    assert "[gap] region ZZZ not in features.csv" in text


def test_report_zero_flow_world_states_no_effect(tmp_path):
    _write_world(tmp_path, kernel_scale=0.0, flow_density=0.0, seed=11)
    manifest = run_pipeline(_config(tmp_path))
    text = open(manifest.path("report.txt"), encoding="utf-8").read()
    assert "kernel: no flow effect" in text


# -------------------------------------------------------------------
# robustness protocol
# -------------------------------------------------------------------

def test_robustness_runs_column_and_row_trials(finished_run):
    root, world, config, _ = finished_run
    result = robustness_test(config, world.panel, world.z_observed, world.flows,
                             n_trials=1, seed=0)
    kinds = [t.kind for t in result.trials]
    assert kinds == ["column", "row"]
    assert result.max_perturbation == max(t.perturbation for t in result.trials)
    for trial in result.trials:
        assert trial.perturbation >= 0.0
        assert len(trial.cosines) >= 1


def test_robustness_rejects_bad_trial_count(finished_run):
    root, world, config, _ = finished_run
    with pytest.raises(DomainError):
        robustness_test(config, world.panel, world.z_observed, world.flows,
                        n_trials=0, seed=0)
