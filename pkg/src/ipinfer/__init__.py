"""Imputation-powered inference for M-estimation under blockwise missing data.

Combine a complete-case M-estimator with black-box imputations of the
incomplete rows, debiased pattern by pattern, with per-pattern weights
tuned to minimize the asymptotic variance.  Includes cross-fitted variants
with bootstrap variance, transfer-gap diagnostics for the imputation
assumption, classical baselines, and a simulation harness.
"""

from .baselines import (
    aipw_fit,
    augmentation_dimension,
    best_single_pattern,
    complete_case_fit,
    monomial_features,
    naive_single_impute_fit,
    single_pattern_ipi,
)
from .diagnostics import (
    DiagnosticReport,
    apply_gradient_shift,
    t_full_test,
    t_ipi_test,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    DimensionError,
    FitError,
    IpinferError,
    NumericError,
    RankDeficiencyError,
    UnusableDatasetError,
)
from .estimators import (
    IPIFit,
    FoldedImputers,
    ScoreTables,
    TuningComponents,
    TuningWeights,
    bootstrap_variance,
    cipi_fit,
    cipi_point_estimate,
    complete_case_hessian,
    confidence_interval,
    cross_fit,
    effective_sample_size,
    estimate_variance,
    full_ipi_hessian,
    ipi_fit,
    ipi_grad,
    ipi_point_estimate,
    pooled_weights,
    score_tables,
    split_train_inference,
    tune_lambda,
    tuning_components,
    zero_weights,
)
from .imputers import (
    CHAINED_KIND,
    GAUSSIAN_KIND,
    HOTDECK_KIND,
    KINDS,
    MEAN_KIND,
    ZERO_KIND,
    ChainedRegressionImputer,
    GaussianConditionalImputer,
    HotDeckImputer,
    ImputationModel,
    MeanImputer,
    ZeroImputer,
    fit as fit_imputer,
)
from .losses import (
    LossModel,
    linear_regression_loss,
    logistic_regression_loss,
    loss_for_columns,
    mean_loss,
    solve_complete_case,
    solve_mean_loss,
)
from .patterns import (
    DataRow,
    Pattern,
    PatternedDataset,
    build_dataset,
    dataset_from_rows,
    load_csv,
    mask_matrix,
    mask_row,
)
from .simgen import (
    ExperimentConfig,
    ExperimentResult,
    FactorModelConfig,
    MissingnessConfig,
    gen_factor_data,
    gen_mcar_missingness,
    gen_shift_experiment,
    run_trials,
)

__version__ = "0.1.0"

__all__ = [
    "aipw_fit",
    "augmentation_dimension",
    "best_single_pattern",
    "complete_case_fit",
    "monomial_features",
    "naive_single_impute_fit",
    "single_pattern_ipi",
    "DiagnosticReport",
    "apply_gradient_shift",
    "t_full_test",
    "t_ipi_test",
    "ConfigError",
    "ConvergenceError",
    "DataError",
    "DimensionError",
    "FitError",
    "IpinferError",
    "NumericError",
    "RankDeficiencyError",
    "UnusableDatasetError",
    "IPIFit",
    "FoldedImputers",
    "ScoreTables",
    "TuningComponents",
    "TuningWeights",
    "bootstrap_variance",
    "cipi_fit",
    "cipi_point_estimate",
    "complete_case_hessian",
    "confidence_interval",
    "cross_fit",
    "effective_sample_size",
    "estimate_variance",
    "full_ipi_hessian",
    "ipi_fit",
    "ipi_grad",
    "ipi_point_estimate",
    "pooled_weights",
    "score_tables",
    "split_train_inference",
    "tune_lambda",
    "tuning_components",
    "zero_weights",
    "CHAINED_KIND",
    "GAUSSIAN_KIND",
    "HOTDECK_KIND",
    "KINDS",
    "MEAN_KIND",
    "ZERO_KIND",
    "ChainedRegressionImputer",
    "GaussianConditionalImputer",
    "HotDeckImputer",
    "ImputationModel",
    "MeanImputer",
    "ZeroImputer",
    "fit_imputer",
    "LossModel",
    "linear_regression_loss",
    "logistic_regression_loss",
    "loss_for_columns",
    "mean_loss",
    "solve_complete_case",
    "solve_mean_loss",
    "DataRow",
    "Pattern",
    "PatternedDataset",
    "build_dataset",
    "dataset_from_rows",
    "load_csv",
    "mask_matrix",
    "mask_row",
    "ExperimentConfig",
    "ExperimentResult",
    "FactorModelConfig",
    "MissingnessConfig",
    "gen_factor_data",
    "gen_mcar_missingness",
    "gen_shift_experiment",
    "run_trials",
]
