use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::information::{transformed_functional, PreparedSamples};
use super::{PlacementPolicy, PolicyKind};
use crate::bayes::{sample_laplace, LaplacePosterior, SampleSet};
use crate::error::Result;
use crate::psychometric::Design;

/// Curves whose maximum stays below this (nats) are treated as flat.
pub const ZERO_INFORMATION: f64 = 1e-12;

/// Information at every level evaluated while selecting a stimulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    /// Sorted ascending; the coarse grid merged with all refined grids.
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
    /// Index of the selected level: the lowest maximizer, or for a flat curve
    /// the level nearest the domain midpoint.
    pub chosen: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionWarning {
    /// No level carries information; the domain midpoint was returned.
    AllZeroInformation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub x: f64,
    pub curve: CostCurve,
    pub warning: Option<SelectionWarning>,
}

/// Draws `policy.sample_count` samples from `lp` and selects the next stimulus.
pub fn select_next(policy: &PlacementPolicy, lp: &LaplacePosterior, d: &Design, seed: u64) -> Result<Selection> {
    policy.validate(d)?;
    let s = sample_laplace(lp, policy.sample_count, seed)?;
    select_next_from_samples(policy, &s, d)
}

/// Selects the next stimulus using a given sample set.
pub fn select_next_from_samples(policy: &PlacementPolicy, s: &SampleSet, d: &Design) -> Result<Selection> {
    policy.grid.validate(d)?;
    let prep = PreparedSamples::new(s, d);
    let score: Box<dyn Fn(f64) -> Result<f64> + Sync> = match &policy.kind {
        PolicyKind::Psi => Box::new(|x| Ok(prep.psi_information(x))),
        PolicyKind::T { functional, estimator } => {
            let (values, weights, source) = transformed_functional(s, functional, d)?;
            let est = *estimator;
            let prep = &prep;
            Box::new(move |x| prep.t_information(x, &values, &weights, &source, est))
        }
    };

    let mut evaluated: Vec<(f64, f64)> = Vec::new();
    let mut levels = policy.grid.levels.clone();
    let mut spacing = policy.grid.spacing();
    for round in 0..=policy.grid.refine_rounds {
        let values: Vec<f64> = levels.par_iter().map(|&x| score(x)).collect::<Result<_>>()?;
        evaluated.extend(levels.iter().copied().zip(values));
        let best = argmax(&evaluated);
        if round == policy.grid.refine_rounds || evaluated[best].1 < ZERO_INFORMATION {
            break;
        }
        spacing *= policy.grid.refine_shrink;
        levels = refined_levels(evaluated[best].0, spacing, policy.grid.refine_points, d)
            .into_iter()
            .filter(|x| !evaluated.iter().any(|(e, _)| e == x))
            .collect();
    }

    evaluated.sort_by(|a, b| a.0.total_cmp(&b.0));
    let best = argmax(&evaluated);
    let (levels, values): (Vec<f64>, Vec<f64>) = evaluated.into_iter().unzip();
    if values[best] < ZERO_INFORMATION {
        log::warn!("information is zero at every candidate level; returning the domain midpoint");
        let mid = d.midpoint();
        let chosen = (0..levels.len())
            .min_by(|a, b| (levels[*a] - mid).abs().total_cmp(&(levels[*b] - mid).abs()))
            .unwrap_or(0);
        return Ok(Selection {
            x: mid,
            curve: CostCurve { levels, values, chosen },
            warning: Some(SelectionWarning::AllZeroInformation),
        });
    }
    Ok(Selection { x: levels[best], curve: CostCurve { levels, values, chosen: best }, warning: None })
}

/// Highest value; among equal values the lowest level.
fn argmax(points: &[(f64, f64)]) -> usize {
    let mut best = 0;
    for (i, p) in points.iter().enumerate().skip(1) {
        let b = points[best];
        if p.1 > b.1 || (p.1 == b.1 && p.0 < b.0) {
            best = i;
        }
    }
    best
}

/// `count` levels spaced `h` apart on a lattice through `center`, centred on
/// it where the domain allows and shifted inwards by whole steps otherwise.
fn refined_levels(center: f64, h: f64, count: usize, d: &Design) -> Vec<f64> {
    let half = (count as i64 - 1) / 2;
    let below = (((center - d.x_lo) / h).floor() as i64).max(0);
    let above = (((d.x_hi - center) / h).floor() as i64).max(0);
    let mut k_lo = -half.min(below);
    let mut k_hi = k_lo + count as i64 - 1;
    if k_hi > above {
        k_hi = above;
        k_lo = (k_hi - count as i64 + 1).max(-below);
    }
    (k_lo..=k_hi).map(|k| center + k as f64 * h).filter(|x| d.contains(*x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::GaussianPrior;
    use crate::psychometric::Params;

    #[test]
    fn refined_levels_stay_in_domain() {
        let d = Design::two_afc(0.0, 10.0).unwrap();
        let l = refined_levels(5.0, 0.1, 45, &d);
        assert_eq!(l.len(), 45);
        assert!((l[22] - 5.0).abs() < 1e-12);
        let l = refined_levels(0.2, 0.1, 45, &d);
        assert_eq!(l.len(), 45);
        assert!(l[0] >= 0.0 && l.iter().any(|x| (x - 0.2).abs() < 1e-12));
        let l = refined_levels(9.95, 0.1, 45, &d);
        assert_eq!(l.len(), 45);
        assert!(*l.last().unwrap() <= 10.0);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[(3.0, 1.0), (1.0, 1.0), (2.0, 0.5)]), 1);
    }

    #[test]
    fn point_mass_gives_flat_curve() {
        let d = Design::two_afc(0.0, 10.0).unwrap();
        let tiny = [[1e-24, 0.0, 0.0], [0.0, 1e-24, 0.0], [0.0, 0.0, 1e-24]];
        let lp = LaplacePosterior::new(Params::new(3.0, 0.0, -4.0).unwrap(), tiny, 0.0).unwrap();
        let sel = select_next(&PlacementPolicy::psi(&d), &lp, &d, 1).unwrap();
        assert_eq!(sel.warning, Some(SelectionWarning::AllZeroInformation));
        assert_eq!(sel.x, 5.0);
    }

    #[test]
    fn prior_selection_is_interior() {
        let d = Design::two_afc(0.0, 10.0).unwrap();
        let prior = GaussianPrior::with_lapse((3.0, 0.5f64.sqrt()), (0.0, 0.5f64.sqrt()), 0.02, 0.3).unwrap();
        let lp = LaplacePosterior::from_prior(&prior);
        let sel = select_next(&PlacementPolicy::psi(&d), &lp, &d, 3).unwrap();
        assert!(sel.warning.is_none());
        assert!(sel.x > d.x_lo && sel.x < d.x_hi);
        let c = &sel.curve;
        assert_eq!(c.levels[c.chosen], sel.x);
        assert!(c.values.iter().all(|v| *v <= c.values[c.chosen]));
        assert!(c.levels.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(c.levels.len(), c.values.len());
    }
}
