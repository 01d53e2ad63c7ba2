//! Posterior predictive check data for a drifting observer.

use serde::{Deserialize, Serialize};

use psibayes_core::bayes::{
    importance_sample_posterior, laplace_fit_with, posterior_predictive_simulate, sample_laplace, Dataset, FitOptions,
    GaussianPrior, LaplacePosterior, DEFAULT_PROPOSAL_INFLATION,
};
use psibayes_core::placement::{select_next, PlacementPolicy};
use psibayes_core::rng;

use crate::observer::SimulatedObserver;
use crate::Result;

/// Default drift of `mu` per trial; negative values raise the threshold.
pub const DEFAULT_DRIFT_PER_TRIAL: f64 = -0.02;
pub const DEFAULT_PPC_TRIALS: usize = 500;
pub const DEFAULT_REPLICATES: usize = 1000;
/// Flag when the observed late-block rate falls below this replicate quantile.
pub const LATE_BLOCK_QUANTILE: f64 = 0.05;

/// `(trial, level, response)` for plotting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub t: usize,
    pub x: f64,
    pub r: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcRun {
    pub data: Dataset,
    pub triplets: Vec<Triplet>,
    pub posterior: LaplacePosterior,
}

/// Runs an adaptive session of `trials` trials against `observer`.
pub fn ppc_dataset(observer: &SimulatedObserver, prior: &GaussianPrior, policy: &PlacementPolicy, trials: usize, seed: u64) -> Result<PpcRun> {
    let d = observer.design;
    policy.validate(&d)?;
    let mut resp_rng = rng::stream(seed, 0);
    let mut data = Dataset::new(d);
    let mut lp = LaplacePosterior::from_prior(prior);
    for t in 1..=trials {
        let x = select_next(policy, &lp, &d, rng::derive_seed(seed, t as u64))?.x;
        let r = observer.respond(x, t, &mut resp_rng)?;
        data.push(x, r)?;
        let opts = FitOptions { warm_start: Some(lp.mode), warm_only: true, ..FitOptions::default() };
        lp = laplace_fit_with(&data, prior, &opts)?;
    }
    let triplets = data.trials().iter().map(|tr| Triplet { t: tr.index, x: tr.x, r: tr.response }).collect();
    Ok(PpcRun { data, triplets, posterior: lp })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcCheck {
    /// Correct rate over the last third of the real data.
    pub observed: f64,
    /// Replicate late-block rates, sorted.
    pub replicate_rates: Vec<f64>,
    /// Fraction of replicates with a late-block rate at or below `observed`.
    pub tail_fraction: f64,
    pub flagged: bool,
}

/// Late-block posterior predictive test.
///
/// Replicates reuse the real stimulus sequence with parameters drawn from the
/// posterior; the run is flagged when the real correct rate over the last
/// third of trials is below the 5th percentile of the replicate rates.
pub fn late_block_check(run: &PpcRun, prior: &GaussianPrior, replicates: usize, seed: u64) -> Result<PpcCheck> {
    let n = run.data.len();
    let late = (2 * n / 3)..n;
    let samples = match importance_sample_posterior(
        &run.posterior,
        &run.data,
        prior,
        4 * replicates.max(500),
        DEFAULT_PROPOSAL_INFLATION,
        rng::derive_seed(seed, 0),
    ) {
        Ok(s) => s,
        Err(_) => sample_laplace(&run.posterior, 4 * replicates.max(500), rng::derive_seed(seed, 0))?,
    };
    let xs: Vec<f64> = run.data.trials().iter().map(|t| t.x).collect();
    let reps = posterior_predictive_simulate(&samples, &xs, &run.data.design, replicates, rng::derive_seed(seed, 1))?;
    let mut rates: Vec<f64> = reps.iter().map(|r| r.success_rate(late.clone())).collect();
    rates.sort_by(f64::total_cmp);
    let observed = run.data.success_rate(late);
    let below = rates.iter().filter(|&&r| r <= observed).count();
    let cutoff = psibayes_core::bayes::weighted_quantile(&rates, &vec![1.0; rates.len()], LATE_BLOCK_QUANTILE);
    Ok(PpcCheck { observed, tail_fraction: below as f64 / rates.len() as f64, flagged: observed < cutoff, replicate_rates: rates })
}
