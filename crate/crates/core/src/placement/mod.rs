//! Stimulus selection and stopping rules.
//!
//! Each trial draws a fresh sample set from the current posterior, scores a
//! grid of candidate stimulus levels by the mutual information between the
//! next response and either the full parameter vector (`Psi`) or one scalar
//! functional (`T`), refines the grid around the best level, and returns the
//! maximizer.

mod information;
mod policy;
mod select;
mod stopping;

pub use information::{
    bernoulli_entropy, conditional_information, psi_information, t_information, PreparedSamples, TEstimator, VARIANCE_FLOOR,
};
pub use policy::{multi_threshold_policy, MultiThresholdPolicy, PlacementPolicy, PolicyKind, StimulusGrid};
pub use select::{select_next, select_next_from_samples, CostCurve, Selection, SelectionWarning, ZERO_INFORMATION};
pub use stopping::{should_stop, StoppingRule};
