"""decaylab: distance-decay estimation around point sources.

The package covers the full workflow: great-circle distance tables,
parametric decay-curve fitting with spatial HAC errors, threshold
boundaries and the diffusion quantities they imply, an explicit
diffusion-decay simulator for validating the reduced form, and panel
difference-in-differences benchmarks on synthetic data. The ``decaylab``
command drives the same code and writes CSV/JSON reports with optional
PNG figures.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import (
    BoundaryUndefined,
    ConfigError,
    DataError,
    DecayLabError,
    DomainError,
    DuplicateSourceId,
    DuplicateUnitId,
    EmptyBand,
    EmptyFile,
    EmptySourceSet,
    EstimationError,
    InsufficientPrePeriods,
    InvalidConfig,
    MissingColumn,
    MissingResiduals,
    ModifierMissing,
    NoModifierVariation,
    NonPositiveKappa,
    NonPositiveOutcome,
    NonPositiveRate,
    NonPositiveTime,
    NoVariationInTreatment,
    ParseError,
    SingularJacobian,
    StratumTooSmall,
    TooFewObservations,
    UnbalancedPanel,
    UnstableTimestep,
    WindowTooSmall,
)
from .geo import (
    EARTH_RADIUS_KM,
    DistanceRecord,
    GeoPoint,
    SourceSet,
    build_distance_table,
    haversine_distance,
    nearest_source,
    neighbor_pairs_within,
)
from .models import (
    D_FLOOR_KM,
    DecayModelKind,
    DecayParams,
    ThresholdSpec,
    clamp_distances,
    half_distance,
    jacobian,
    predict,
    spatial_gradient_magnitude,
)
from .special import bessel_i0, bessel_k0
from .estimation import (
    FitResult,
    HacConfig,
    LogOlsResult,
    ModelComparison,
    Sample,
    aic_bic,
    compare_models,
    conley_hac_se,
    delta_method_se,
    fit_nls,
    fit_ols_log,
    information_criteria,
    levenberg_marquardt,
)
from .functionals import (
    BUILTIN_SPLITS,
    BoundaryEstimate,
    DiffusionSummary,
    DiagnosticVerdict,
    ExposureSpec,
    KappaDecomposition,
    SplitRule,
    StratifiedResult,
    Verdict,
    boundary_evolution,
    boundary_velocity,
    classify_decay,
    cumulative_exposure,
    decompose_kappa,
    implied_diffusion,
    sign_reversal_test,
    spatial_boundary,
    stratified_fit,
)
from .pde import (
    BoundaryCondition,
    ClosureResult,
    FieldGrid,
    PdeParams,
    PointSource,
    SimulationConfig,
    SimulationResult,
    closure_decay,
    max_stable_dt,
    recover_kappa_eff,
    solve_transient,
    steady_state_green,
)
from .panel import (
    BANDED_EFFECT_CONFIG,
    DEFAULT_PANEL_CONFIG,
    DEFAULT_PANEL_SEED,
    BandEffect,
    DidResult,
    EventStudyResult,
    InteractionDidResult,
    PanelConfig,
    PanelObservation,
    distance_band_effects,
    event_study,
    fit_twfe,
    generate_synthetic_panel,
    interaction_did,
)
from .pipeline import PipelineOutcome, RunConfig, run_pipeline

__all__ = [
    "__version__",
    # errors
    "DecayLabError",
    "ConfigError",
    "InvalidConfig",
    "DataError",
    "EmptyFile",
    "EmptySourceSet",
    "DuplicateUnitId",
    "DuplicateSourceId",
    "MissingColumn",
    "ParseError",
    "NonPositiveOutcome",
    "ModifierMissing",
    "UnbalancedPanel",
    "EstimationError",
    "DomainError",
    "NonPositiveRate",
    "NonPositiveKappa",
    "NonPositiveTime",
    "TooFewObservations",
    "SingularJacobian",
    "MissingResiduals",
    "BoundaryUndefined",
    "StratumTooSmall",
    "UnstableTimestep",
    "WindowTooSmall",
    "NoVariationInTreatment",
    "InsufficientPrePeriods",
    "EmptyBand",
    "NoModifierVariation",
    # geo
    "EARTH_RADIUS_KM",
    "GeoPoint",
    "SourceSet",
    "DistanceRecord",
    "haversine_distance",
    "nearest_source",
    "neighbor_pairs_within",
    "build_distance_table",
    # models
    "DecayModelKind",
    "DecayParams",
    "ThresholdSpec",
    "D_FLOOR_KM",
    "predict",
    "jacobian",
    "spatial_gradient_magnitude",
    # special functions
    "bessel_i0",
    "bessel_k0",
    "half_distance",
    "clamp_distances",
    # estimation
    "Sample",
    "HacConfig",
    "FitResult",
    "LogOlsResult",
    "ModelComparison",
    "information_criteria",
    "levenberg_marquardt",
    "fit_nls",
    "fit_ols_log",
    "compare_models",
    "conley_hac_se",
    "delta_method_se",
    "aic_bic",
    # functionals
    "BoundaryEstimate",
    "DiffusionSummary",
    "ExposureSpec",
    "Verdict",
    "DiagnosticVerdict",
    "SplitRule",
    "StratifiedResult",
    "KappaDecomposition",
    "BUILTIN_SPLITS",
    "spatial_boundary",
    "implied_diffusion",
    "boundary_evolution",
    "boundary_velocity",
    "cumulative_exposure",
    "classify_decay",
    "sign_reversal_test",
    "stratified_fit",
    "decompose_kappa",
    # pde
    "BoundaryCondition",
    "PointSource",
    "PdeParams",
    "FieldGrid",
    "SimulationConfig",
    "SimulationResult",
    "ClosureResult",
    "max_stable_dt",
    "solve_transient",
    "closure_decay",
    "recover_kappa_eff",
    "steady_state_green",
    # panel
    "PanelObservation",
    "PanelConfig",
    "DEFAULT_PANEL_SEED",
    "DEFAULT_PANEL_CONFIG",
    "BANDED_EFFECT_CONFIG",
    "generate_synthetic_panel",
    "DidResult",
    "EventStudyResult",
    "BandEffect",
    "InteractionDidResult",
    "fit_twfe",
    "event_study",
    "distance_band_effects",
    "interaction_did",
    # pipeline
    "RunConfig",
    "PipelineOutcome",
    "run_pipeline",
]
