"""Evidence-strength measures for forensic identification-of-source problems.

Computes three competing measures on multivariate trace-element panels:
the generalized fiducial factor (GFF), conjugate-prior Bayes factors under
prosecution- and defense-leaning presets, and the frequentist likelihood
ratio, plus the simulation harness and discrimination/calibration
diagnostics for comparing them.
"""

from .bayes_factor import BfResult, PriorSpec, compute_bf, prior_preset
from .data import (
    AlternativeDataset,
    AlternativeParams,
    CaseBundle,
    MeasurementPanel,
    SpecificParams,
    estimate_alt_params,
    estimate_specific_params,
    estimate_t_hats,
    export_csv,
    generate_alternative,
    generate_specific,
    ingest_csv,
    preprocess_select_elements,
)
from .diagnostics import (
    CalibrationCurve,
    EceCurves,
    ScoreBatch,
    auc_distribution,
    calibration_discrepancy,
    ece_curve,
    empirical_auc,
)
from .gf_alternative import AlternativeChain, log_jacobian_a, log_q_a, sample_gf_alternative
from .gf_specific import SpecificChain, log_jacobian_s, log_q_s, sample_gf_specific
from .gff import GffResult, compute_gff, gff_numerator, unknown_source_marginal
from .harness import (
    DesignConfig,
    EngineSettings,
    TrialResult,
    derive_trial_seed,
    emit_plot_data,
    evaluate_case,
    load_results,
    run_design,
    score_batches,
)
from .likelihood_ratio import LrResult, compute_lr, mle_alternative, mle_specific
from .mcmc import ChainConfig

__version__ = "0.1.0"

__all__ = [
    "AlternativeChain",
    "AlternativeDataset",
    "AlternativeParams",
    "BfResult",
    "CalibrationCurve",
    "CaseBundle",
    "ChainConfig",
    "DesignConfig",
    "EceCurves",
    "EngineSettings",
    "GffResult",
    "LrResult",
    "MeasurementPanel",
    "PriorSpec",
    "ScoreBatch",
    "SpecificChain",
    "SpecificParams",
    "TrialResult",
    "auc_distribution",
    "calibration_discrepancy",
    "compute_bf",
    "compute_gff",
    "compute_lr",
    "derive_trial_seed",
    "ece_curve",
    "emit_plot_data",
    "empirical_auc",
    "estimate_alt_params",
    "estimate_specific_params",
    "estimate_t_hats",
    "evaluate_case",
    "export_csv",
    "generate_alternative",
    "generate_specific",
    "gff_numerator",
    "ingest_csv",
    "load_results",
    "log_jacobian_a",
    "log_jacobian_s",
    "log_q_a",
    "log_q_s",
    "mle_alternative",
    "mle_specific",
    "preprocess_select_elements",
    "prior_preset",
    "run_design",
    "sample_gf_alternative",
    "sample_gf_specific",
    "score_batches",
    "unknown_source_marginal",
]
