//! Simulation laboratory: synthetic observers, stimulus sampling schemes,
//! mean-squared-error studies, Weibull matching and drifting-observer data
//! for posterior predictive checks.

pub mod observer;
pub mod ppc;
pub mod scheme;
pub mod study;
pub mod weibull;

pub use observer::{ObserverKind, SimulatedObserver};
pub use ppc::{
    late_block_check, ppc_dataset, PpcCheck, PpcRun, Triplet, DEFAULT_DRIFT_PER_TRIAL, DEFAULT_PPC_TRIALS, DEFAULT_REPLICATES,
    LATE_BLOCK_QUANTILE,
};
pub use scheme::{constant_stimuli_levels, scheme_interval, scheme_levels, FixedShape, SamplingScheme, Spread};
pub use study::{
    convergence_configs, convergence_study, reference_observer, reference_prior, robustness_configs, robustness_study,
    robustness_study_with, run_study, Estimand, MseReport, MseRow, StudyConfig, StudyOptions, REFERENCE_DOMAIN,
};
pub use weibull::{l2_objective, match_weibull, prior_log_beta, weibull_setup_prior, LogBetaSamples, WeibullMatch};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Core(#[from] psibayes_core::Error),
    #[error("configuration: {0}")]
    Config(String),
    #[error("optimization did not converge: {0}")]
    NonConvergence(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;
