use serde::{Deserialize, Serialize};

use super::TEstimator;
use crate::error::{Error, Result};
use crate::psychometric::{Design, Functional};

pub const DEFAULT_GRID_POINTS: usize = 45;
pub const DEFAULT_REFINE_ROUNDS: usize = 2;
pub const DEFAULT_REFINE_SHRINK: f64 = 0.2;
/// Levels per refined grid; 11 levels at shrink 0.2 reach just past the
/// neighbouring levels of the previous grid.
pub const DEFAULT_REFINE_POINTS: usize = 11;
pub const DEFAULT_SAMPLE_COUNT: usize = 5000;
pub const MIN_SAMPLE_COUNT: usize = 100;

/// Candidate stimulus levels and how the search refines around the best one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusGrid {
    pub levels: Vec<f64>,
    pub refine_rounds: usize,
    /// Spacing of each refined grid relative to the previous one.
    pub refine_shrink: f64,
    #[serde(default = "default_refine_points")]
    pub refine_points: usize,
}

fn default_refine_points() -> usize {
    DEFAULT_REFINE_POINTS
}

impl StimulusGrid {
    pub fn new(levels: Vec<f64>, refine_rounds: usize, refine_shrink: f64) -> Result<Self> {
        let g = Self { levels, refine_rounds, refine_shrink, refine_points: DEFAULT_REFINE_POINTS };
        g.check()?;
        Ok(g)
    }

    pub fn with_refine_points(mut self, points: usize) -> Result<Self> {
        self.refine_points = points;
        self.check()?;
        Ok(self)
    }

    /// `points` evenly spaced levels spanning the design's stimulus domain,
    /// with the default refinement.
    pub fn uniform(d: &Design, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::InvalidArgument(format!("stimulus grid needs at least 2 levels, got {points}")));
        }
        let levels = (0..points)
            .map(|i| d.x_lo + (d.x_hi - d.x_lo) * i as f64 / (points - 1) as f64)
            .collect();
        Self::new(levels, DEFAULT_REFINE_ROUNDS, DEFAULT_REFINE_SHRINK)
    }

    fn check(&self) -> Result<()> {
        if self.levels.len() < 2 {
            return Err(Error::InvalidArgument("stimulus grid needs at least 2 levels".into()));
        }
        if self.levels.windows(2).any(|w| !(w[0] < w[1])) || self.levels.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("stimulus levels must be finite and strictly increasing".into()));
        }
        if !(self.refine_shrink > 0.0 && self.refine_shrink < 1.0) {
            return Err(Error::InvalidArgument(format!("refine shrink must lie in (0, 1), got {}", self.refine_shrink)));
        }
        if self.refine_points < 3 {
            return Err(Error::InvalidArgument(format!("refined grids need at least 3 levels, got {}", self.refine_points)));
        }
        Ok(())
    }

    pub fn validate(&self, d: &Design) -> Result<()> {
        self.check()?;
        if !d.contains(self.levels[0]) || !d.contains(self.levels[self.levels.len() - 1]) {
            return Err(Error::InvalidArgument(format!(
                "stimulus grid [{}, {}] leaves the design domain [{}, {}]",
                self.levels[0],
                self.levels[self.levels.len() - 1],
                d.x_lo,
                d.x_hi
            )));
        }
        Ok(())
    }

    /// Median gap between neighbouring levels.
    pub fn spacing(&self) -> f64 {
        let mut gaps: Vec<f64> = self.levels.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.sort_by(f64::total_cmp);
        gaps[gaps.len() / 2]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    /// Information about the whole parameter vector.
    Psi,
    /// Information about one functional.
    T {
        functional: Functional,
        #[serde(default)]
        estimator: TEstimator,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlacementPolicy {
    pub kind: PolicyKind,
    pub sample_count: usize,
    pub grid: StimulusGrid,
}

impl PlacementPolicy {
    /// Psi policy with the default sample count and grid over the design domain.
    pub fn psi(d: &Design) -> Self {
        Self {
            kind: PolicyKind::Psi,
            sample_count: DEFAULT_SAMPLE_COUNT,
            grid: StimulusGrid::uniform(d, DEFAULT_GRID_POINTS).expect("default grid is valid"),
        }
    }

    /// T policy for `functional` with the default sample count and grid.
    pub fn t(d: &Design, functional: Functional, estimator: TEstimator) -> Self {
        Self { kind: PolicyKind::T { functional, estimator }, ..Self::psi(d) }
    }

    pub fn with_sample_count(mut self, n: usize) -> Self {
        self.sample_count = n;
        self
    }

    pub fn validate(&self, d: &Design) -> Result<()> {
        if self.sample_count < MIN_SAMPLE_COUNT {
            return Err(Error::InvalidArgument(format!(
                "sample count must be at least {MIN_SAMPLE_COUNT}, got {}",
                self.sample_count
            )));
        }
        if let PolicyKind::T { functional, .. } = &self.kind {
            functional.validate(d)?;
        }
        self.grid.validate(d)
    }
}

/// Policy for estimating several thresholds at once.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiThresholdPolicy {
    pub policy: PlacementPolicy,
    /// True for two levels, where the thresholds do not determine the
    /// parameters and the Psi criterion is only a stand-in.
    pub approximation: bool,
}

/// With three or more threshold levels the thresholds and `(mu, nu, eta)`
/// are in one-to-one correspondence, so information about the thresholds is
/// information about the parameters and the Psi policy is exact.
pub fn multi_threshold_policy(levels: &[f64], d: &Design) -> Result<MultiThresholdPolicy> {
    if levels.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two threshold levels; use a T policy for a single threshold".into(),
        ));
    }
    for &l in levels {
        Functional::Threshold(l).validate(d)?;
    }
    let mut sorted = levels.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("threshold levels must be distinct".into()));
    }
    Ok(MultiThresholdPolicy { policy: PlacementPolicy::psi(d), approximation: levels.len() == 2 })
}
