"""Stacked affinity modeling from docking scores and learned predictors.

The package turns per-complex docking poses and base-predictor score
tables into meta-models of binding affinity: element-typed symmetric
RMSD pose filters, feature-matrix assembly (docking energies, ligand
weight, per-architecture score means, PCA projections of the prediction
matrix), four regression protocols with built-in hyperparameter
selection, and a deterministic, resumable training pipeline with a
reporting CLI.
"""

from ._version import VERSION as __version__
from .errors import (
    AffistackError,
    ConfigError,
    DataError,
    NumericalError,
    ParseError,
    SchemaError,
)
from .evaluate import (
    EvaluationReport,
    MonteCarloNull,
    SynergyPartition,
    TargetScreenReport,
    average_ranks,
    evaluation_report,
    grouped_report,
    mann_whitney_u,
    monte_carlo_subsample_null,
    mse_rmse,
    pearson,
    precision_at_actives,
    screen_target,
    spearman,
    synergy_partition,
    topk_recall,
    welch_t,
)
from .features import (
    FeatureGroup,
    FeatureGroupSpec,
    FeatureMatrix,
    assemble_features,
    dl_mean_scores,
    parse_feature_matrix,
    pca_source_table,
    write_feature_matrix,
)
from .ingest import (
    AffinityLabel,
    AssayMethod,
    Atom,
    BasePredictionTable,
    Cohort,
    CohortRecord,
    GroupTag,
    MeasureKind,
    Molecule,
    Partition,
    Pose,
    PoseSet,
    ScoringFunction,
    filter_general_set,
    format_float,
    merge_tables,
    molecular_weight,
    parse_labels,
    parse_partitions,
    parse_score_table,
    parse_sdf,
    write_labels,
    write_partitions,
    write_score_table,
    write_sdf,
)
from .learners import (
    Diagnostics,
    GBTHyperparams,
    GBTModel,
    LinearAlgorithm,
    LinearModel,
    MetaAlgorithm,
    ProtocolParams,
    Standardizer,
    fit_algorithm,
    fit_elasticnet_cv,
    fit_gbt,
    fit_lasso_cd,
    fit_lasso_cv,
    fit_ols,
    lasso_alpha_grid,
    model_from_json_dict,
    model_to_json_dict,
    predict,
    random_search_gbt,
    soft_threshold,
)
from .pca import (
    PCABasis,
    PcaSource,
    PcSweepResult,
    fit_pca,
    optimize_pc_count,
    optimize_pc_count_detailed,
    pca_basis_from_json_dict,
    pca_basis_to_json_dict,
    project,
)
from .pipeline import (
    CvPlan,
    FittedMetaModel,
    MatrixCell,
    cell_seed,
    cohort_fingerprint,
    fitted_model_from_json_dict,
    fitted_model_to_json_dict,
    load_fitted_model,
    model_file_name,
    predict_meta,
    repeated_kfold,
    run_matrix,
    save_fitted_model,
    train_meta_model,
)
from .pose_rmsd import (
    SELECTION_CUTOFF,
    SENTINEL_RMSD,
    TRAINING_CUTOFFS,
    FilterMode,
    FilterResult,
    RmsdFilterMode,
    SelectedPose,
    apply_rmsd_cutoff,
    asymmetric_rmsd,
    consensus_filter,
    experimental_filter,
    filter_cohort,
    filter_complex,
    parse_filter_table,
    select_consensus_pair,
    symmetric_rmsd,
    write_filter_table,
)
from .seeding import derived_rng, mixed_seed, seed_words

__all__ = [
    "__version__",
    # errors
    "AffistackError",
    "ConfigError",
    "DataError",
    "NumericalError",
    "ParseError",
    "SchemaError",
    # ingest
    "AffinityLabel",
    "AssayMethod",
    "Atom",
    "BasePredictionTable",
    "Cohort",
    "CohortRecord",
    "GroupTag",
    "MeasureKind",
    "Molecule",
    "Partition",
    "Pose",
    "PoseSet",
    "ScoringFunction",
    "filter_general_set",
    "format_float",
    "merge_tables",
    "molecular_weight",
    "parse_labels",
    "parse_partitions",
    "parse_score_table",
    "parse_sdf",
    "write_labels",
    "write_partitions",
    "write_score_table",
    "write_sdf",
    # pose_rmsd
    "SELECTION_CUTOFF",
    "SENTINEL_RMSD",
    "TRAINING_CUTOFFS",
    "FilterMode",
    "FilterResult",
    "RmsdFilterMode",
    "SelectedPose",
    "apply_rmsd_cutoff",
    "asymmetric_rmsd",
    "consensus_filter",
    "experimental_filter",
    "filter_cohort",
    "filter_complex",
    "parse_filter_table",
    "select_consensus_pair",
    "symmetric_rmsd",
    "write_filter_table",
    # features
    "FeatureGroup",
    "FeatureGroupSpec",
    "FeatureMatrix",
    "assemble_features",
    "dl_mean_scores",
    "parse_feature_matrix",
    "pca_source_table",
    "write_feature_matrix",
    # pca
    "PCABasis",
    "PcaSource",
    "PcSweepResult",
    "fit_pca",
    "optimize_pc_count",
    "optimize_pc_count_detailed",
    "pca_basis_from_json_dict",
    "pca_basis_to_json_dict",
    "project",
    # learners
    "Diagnostics",
    "GBTHyperparams",
    "GBTModel",
    "LinearAlgorithm",
    "LinearModel",
    "MetaAlgorithm",
    "ProtocolParams",
    "Standardizer",
    "fit_algorithm",
    "fit_elasticnet_cv",
    "fit_gbt",
    "fit_lasso_cd",
    "fit_lasso_cv",
    "fit_ols",
    "lasso_alpha_grid",
    "model_from_json_dict",
    "model_to_json_dict",
    "predict",
    "random_search_gbt",
    "soft_threshold",
    # evaluate
    "EvaluationReport",
    "MonteCarloNull",
    "SynergyPartition",
    "TargetScreenReport",
    "average_ranks",
    "evaluation_report",
    "grouped_report",
    "mann_whitney_u",
    "monte_carlo_subsample_null",
    "mse_rmse",
    "pearson",
    "precision_at_actives",
    "screen_target",
    "spearman",
    "synergy_partition",
    "topk_recall",
    "welch_t",
    # pipeline
    "CvPlan",
    "FittedMetaModel",
    "MatrixCell",
    "cell_seed",
    "cohort_fingerprint",
    "fitted_model_from_json_dict",
    "fitted_model_to_json_dict",
    "load_fitted_model",
    "model_file_name",
    "predict_meta",
    "repeated_kfold",
    "run_matrix",
    "save_fitted_model",
    "train_meta_model",
    # seeding
    "derived_rng",
    "mixed_seed",
    "seed_words",
]
