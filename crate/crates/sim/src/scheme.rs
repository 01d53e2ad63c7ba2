use serde::{Deserialize, Serialize};

use psibayes_core::placement::PlacementPolicy;
use psibayes_core::psychometric::{psi_inverse, Design, Params};
use psibayes_core::{Error, Result};

/// Default number of constant-stimuli levels (five equal gaps).
pub const CONSTANT_STIMULI_LEVELS: usize = 6;

/// How trials are placed in a simulated experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplingScheme {
    UniformInterval { lo: f64, hi: f64 },
    /// Levels cycled in order.
    ConstantStimuli { levels: Vec<f64> },
    Adaptive { policy: PlacementPolicy },
}

impl SamplingScheme {
    pub fn validate(&self, d: &Design) -> Result<()> {
        match self {
            SamplingScheme::UniformInterval { lo, hi } => {
                if !(lo < hi) || !d.contains(*lo) || !d.contains(*hi) {
                    return Err(Error::InvalidArgument(format!("interval [{lo}, {hi}] not inside the design domain")));
                }
            }
            SamplingScheme::ConstantStimuli { levels } => {
                if levels.is_empty() || levels.iter().any(|x| !d.contains(*x)) {
                    return Err(Error::InvalidArgument("constant-stimuli levels must lie in the design domain".into()));
                }
            }
            SamplingScheme::Adaptive { policy } => policy.validate(d)?,
        }
        Ok(())
    }
}

/// Performance bands, in proportion correct, that bound the stimulus interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spread {
    Wide,
    Medium,
    Tight,
}

impl Spread {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            Spread::Wide => (0.5001, 0.985),
            Spread::Medium => (0.55, 0.95),
            Spread::Tight => (0.70, 0.85),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Spread::Wide => "wide",
            Spread::Medium => "medium",
            Spread::Tight => "tight",
        }
    }
}

/// Stimulus interval over which the true observer's performance spans the band.
pub fn scheme_interval(truth: &Params, spread: Spread, d: &Design) -> Result<(f64, f64)> {
    let (lo, hi) = spread.bounds();
    Ok((psi_inverse(lo, truth, d)?, psi_inverse(hi, truth, d)?))
}

/// Non-adaptive scheme shapes that [`scheme_levels`] can build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedShape {
    Uniform,
    ConstantStimuli,
}

/// Uniform interval or constant-stimuli levels spanning `spread` for the true observer.
pub fn scheme_levels(shape: FixedShape, truth: &Params, spread: Spread, d: &Design) -> Result<SamplingScheme> {
    let (lo, hi) = scheme_interval(truth, spread, d)?;
    let s = match shape {
        FixedShape::Uniform => SamplingScheme::UniformInterval { lo, hi },
        FixedShape::ConstantStimuli => {
            SamplingScheme::ConstantStimuli { levels: constant_stimuli_levels(lo, hi, CONSTANT_STIMULI_LEVELS) }
        }
    };
    s.validate(d)?;
    Ok(s)
}

/// `count` equally spaced levels from `lo` to `hi` inclusive.
pub fn constant_stimuli_levels(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect()
}
