"""Influenza-mortality modeling toolkit.

Matrix completion for sparse development indicators, spectral
periodicity checks, autoencoder feature extraction with orthogonal
rotation, and a flow-deconvolution regression, plus synthetic worlds
with planted ground truth for verifying all of it.
"""

from .errors import (
    CompletionInputError,
    ConditioningError,
    DomainError,
    FluflowError,
    NoPeriodError,
    NonContractionError,
    NumericError,
    ParseError,
    RegionLookupError,
    SchemaError,
    ShapeError,
    TrainingError,
    ValidationError,
)
from .rng import stream_rng
from .data import (
    FeatureMatrix,
    FlowPair,
    IndicatorPanel,
    KernelCoefficients,
    LabelVector,
    MortalityVector,
    StandardizedPanel,
    WeeklySeries,
    append_indicator_column,
    append_region_row,
    check_feature_orthonormal,
    common_regions,
    feature_matrix_from_scores,
    fmt,
    load_feature_matrix,
    load_flow_matrix,
    load_indicator_panel,
    load_labels,
    load_mortality_rates,
    load_weekly_activity,
    merge_weekly_global,
    normalize_flows,
    normalize_mortality,
    restrict_flows,
    restrict_labels,
    restrict_mortality,
    restrict_panel,
    standardize_columns,
    write_feature_matrix,
    write_flow_matrix,
    write_indicator_panel,
    write_labels,
    write_mortality_rates,
    write_weekly_activity,
)
from .completion import (
    CompletionConfig,
    CompletionResult,
    completed_panel,
    numerical_rank,
    soft_impute,
    svt,
)
from .spectral import Spectrum, dft, dft_values, dominant_period
from .classify import (
    LinearModel,
    accuracy,
    completion_consistency_check,
    svm_objective,
    train_svm,
)
from .encode import (
    AutoencoderSpec,
    TrainedAutoencoder,
    bic,
    encode,
    encoder_jacobians,
    geometric_layer_schedule,
    load_autoencoder,
    reconstruct,
    reconstruction_loss,
    save_autoencoder,
    select_bottleneck,
    train_autoencoder,
)
from .pca import (
    PcaModel,
    attribute_features,
    attribution_matrix,
    fit_pca,
    inverse_transform,
    reconstruction_error_curve,
    transform,
)
from .regress import (
    BootstrapResult,
    BootstrapSummary,
    FitResult,
    FlowDesign,
    SelectionResult,
    bootstrap_cv,
    build_flow_design,
    fit_rectified,
    flow_kernel_matrix,
    match_features,
    ols_fit,
    p_values,
    predict_fixed_point,
    region_contributions,
    regularized_incomplete_beta,
    select_features,
    t_two_sided_p,
)
from .synth import (
    PlantedWorld,
    gen_low_rank,
    gen_nonlinear_manifold,
    gen_periodic_series,
    gen_planted_world,
)
from .pipeline import (
    FeatureBundle,
    FeatureParams,
    Manifest,
    PipelineConfig,
    RobustnessResult,
    TrialResult,
    emit_report,
    extract_features,
    load_manifest,
    robustness_test,
    run_pipeline,
    stage_extract,
    stage_fit,
    stage_impute,
    stage_spectrum,
    stage_validate,
)

__version__ = "0.1.0"
