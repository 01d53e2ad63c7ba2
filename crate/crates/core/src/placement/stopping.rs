use serde::{Deserialize, Serialize};

use crate::bayes::{functional_samples, posterior_entropy_gaussian, LaplacePosterior, SampleSet};
use crate::error::{Error, Result};
use crate::psychometric::{Design, Functional};

/// When to end a session.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StoppingRule {
    FixedTrials { count: usize },
    /// Gaussian entropy of the Laplace posterior (nats) drops below `threshold`.
    EntropyBelow { threshold: f64 },
    /// The posterior puts at least `confidence` of the functional's mass in
    /// `[lo, hi]`; a missing bound is unbounded.
    ProbabilityWithin {
        functional: Functional,
        lo: Option<f64>,
        hi: Option<f64>,
        confidence: f64,
    },
}

impl StoppingRule {
    /// Infinite bounds become open ends.
    pub fn probability_within(functional: Functional, lo: f64, hi: f64, confidence: f64) -> Result<Self> {
        let r = StoppingRule::ProbabilityWithin {
            functional,
            lo: lo.is_finite().then_some(lo),
            hi: hi.is_finite().then_some(hi),
            confidence,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StoppingRule::FixedTrials { .. } => Ok(()),
            StoppingRule::EntropyBelow { threshold } => {
                if threshold.is_nan() {
                    return Err(Error::InvalidArgument("entropy threshold is NaN".into()));
                }
                Ok(())
            }
            StoppingRule::ProbabilityWithin { lo, hi, confidence, .. } => {
                if !(*confidence > 0.0 && *confidence < 1.0) {
                    return Err(Error::InvalidArgument(format!("confidence must lie in (0, 1), got {confidence}")));
                }
                if let (Some(l), Some(h)) = (lo, hi) {
                    if !(l < h) {
                        return Err(Error::InvalidArgument(format!("need lo < hi, got [{l}, {h}]")));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Whether the session should end. A functional that cannot be evaluated on
/// the samples never satisfies `ProbabilityWithin`.
pub fn should_stop(rule: &StoppingRule, lp: &LaplacePosterior, s: &SampleSet, trial_count: usize, d: &Design) -> bool {
    match rule {
        StoppingRule::FixedTrials { count } => trial_count >= *count,
        StoppingRule::EntropyBelow { threshold } => posterior_entropy_gaussian(lp) < *threshold,
        StoppingRule::ProbabilityWithin { functional, lo, hi, confidence } => {
            let Ok(fs) = functional_samples(s, functional, d) else {
                return false;
            };
            let lo = lo.unwrap_or(f64::NEG_INFINITY);
            let hi = hi.unwrap_or(f64::INFINITY);
            let inside: f64 = fs.values.iter().zip(&fs.weights).filter(|(v, _)| **v >= lo && **v <= hi).map(|(_, w)| w).sum();
            inside >= *confidence
        }
    }
}
