//! Weighted parameter samples and the posterior summaries computed from them.

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bayes::likelihood::log_posterior_unnorm;
use crate::bayes::{Dataset, GaussianPrior, LaplacePosterior};
use crate::error::{Error, Result};
use crate::psychometric::{evaluate_functional, psi, Design, Functional, Params};
use crate::rng;

/// Importance weights above this share of the total mass are rejected.
pub const MAX_WEIGHT_SHARE: f64 = 0.999;

/// Largest tolerated share of samples on which a functional is undefined.
pub const MAX_DROPPED_SHARE: f64 = 0.01;

/// `n` parameter samples with normalized weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    samples: Vec<Params>,
    weights: Vec<f64>,
}

impl SampleSet {
    pub fn uniform(samples: Vec<Params>) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::InvalidArgument("sample set must be non-empty".into()));
        }
        Ok(Self { samples, weights: vec![1.0 / n as f64; n] })
    }

    /// Normalizes `weights` to sum to one.
    pub fn weighted(samples: Vec<Params>, weights: Vec<f64>) -> Result<Self> {
        if samples.is_empty() || samples.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "need matching non-empty samples and weights, got {} and {}",
                samples.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument("weights sum to zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { samples, weights })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Params] {
        &self.samples
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Params, f64)> {
        self.samples.iter().zip(self.weights.iter().copied())
    }

    /// Weighted mean of `(mu, nu, eta)`.
    pub fn mean(&self) -> [f64; 3] {
        let mut m = [0.0; 3];
        for (p, w) in self.iter() {
            let v = p.to_array();
            for k in 0..3 {
                m[k] += w * v[k];
            }
        }
        m
    }

    /// Weighted covariance (normalized by the total weight).
    pub fn covariance(&self) -> [[f64; 3]; 3] {
        let m = self.mean();
        let mut c = [[0.0; 3]; 3];
        for (p, w) in self.iter() {
            let v = p.to_array();
            for i in 0..3 {
                for j in 0..3 {
                    c[i][j] += w * (v[i] - m[i]) * (v[j] - m[j]);
                }
            }
        }
        c
    }

    /// Kish effective sample size.
    pub fn effective_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Draws an index with probability proportional to weight.
    pub fn draw_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    }
}

/// Draws `n` independent samples from the Laplace Gaussian.
pub fn sample_laplace(lp: &LaplacePosterior, n: usize, seed: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let l = lp.cholesky().ok_or(Error::NonPositiveDefiniteHessian)?;
    let mode = Vector3::from(lp.mode.to_array());
    let mut r = rng::from_seed(seed);
    let samples = (0..n)
        .map(|_| {
            let z = Vector3::new(r.sample(StandardNormal), r.sample(StandardNormal), r.sample(StandardNormal));
            let v = mode + l * z;
            Params::from_array([v[0], v[1], v[2]])
        })
        .collect();
    SampleSet::uniform(samples)
}

/// Proposal covariance scale used by [`importance_sample_posterior`].
pub const DEFAULT_PROPOSAL_INFLATION: f64 = 2.0;

/// Weighted draws from the exact posterior.
///
/// Samples come from the Laplace Gaussian with its covariance multiplied by
/// `inflation` (heavier coverage of the skewed tails the Gaussian misses) and
/// carry self-normalized weights `posterior / proposal`.
pub fn importance_sample_posterior(
    lp: &LaplacePosterior,
    data: &Dataset,
    prior: &GaussianPrior,
    n: usize,
    inflation: f64,
    seed: u64,
) -> Result<SampleSet> {
    if !(inflation >= 1.0 && inflation.is_finite()) {
        return Err(Error::InvalidArgument(format!("proposal inflation must be at least 1, got {inflation}")));
    }
    let proposal = LaplacePosterior::new(lp.mode, lp.covariance.map(|r| r.map(|v| v * inflation)), lp.log_posterior_at_mode)?;
    let src = sample_laplace(&proposal, n, seed)?;
    let weights = importance_weights(&src, |p| log_posterior_unnorm(data, prior, p), |p| proposal.log_density(p))?;
    let max_weight = weights.iter().copied().fold(0.0, f64::max);
    if max_weight > MAX_WEIGHT_SHARE {
        return Err(Error::DegenerateWeights { max_weight });
    }
    SampleSet::weighted(src.samples, weights)
}

/// Sampling-importance-resampling.
///
/// Each source sample gets weight `w_i ∝ src_w_i * P(q_i) / Q(q_i)`; `k`
/// distinct samples are then drawn without replacement so that sample `i`
/// is included with probability `min(1, c * w_i)` (scaled so the inclusion
/// probabilities sum to `k`), using randomized systematic selection. The
/// result carries uniform weights.
pub fn importance_resample(
    src: &SampleSet,
    target_log_density: impl Fn(&Params) -> f64,
    proposal_log_density: impl Fn(&Params) -> f64,
    k: usize,
    seed: u64,
) -> Result<SampleSet> {
    let n = src.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("resample size must satisfy 0 < k < n, got k={k}, n={n}")));
    }
    let weights = importance_weights(src, target_log_density, proposal_log_density)?;
    let max_weight = weights.iter().copied().fold(0.0, f64::max);
    if max_weight > MAX_WEIGHT_SHARE {
        return Err(Error::DegenerateWeights { max_weight });
    }
    if weights.iter().filter(|w| **w > 0.0).count() < k {
        return Err(Error::DegenerateWeights { max_weight });
    }

    let incl = inclusion_probabilities(&weights, k);
    let mut r = rng::from_seed(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut r);
    let u: f64 = r.random();
    let mut chosen = Vec::with_capacity(k);
    let mut cum = 0.0;
    let mut next = u;
    for &i in &order {
        cum += incl[i];
        while next < cum && chosen.len() < k {
            chosen.push(i);
            next += 1.0;
        }
    }
    // Rounding in the cumulative sum can leave the last slot unfilled.
    if chosen.len() < k {
        for &i in order.iter().rev() {
            if chosen.len() == k {
                break;
            }
            if incl[i] > 0.0 && !chosen.contains(&i) {
                chosen.push(i);
            }
        }
    }
    chosen.sort_unstable();
    chosen.dedup();
    SampleSet::uniform(chosen.into_iter().map(|i| src.samples[i]).collect())
}

/// Inclusion probabilities proportional to `weights`, summing to `k`, capped at one.
fn inclusion_probabilities(weights: &[f64], k: usize) -> Vec<f64> {
    let mut certain = vec![false; weights.len()];
    loop {
        let slots = k - certain.iter().filter(|c| **c).count();
        let free_mass: f64 = weights.iter().zip(&certain).filter(|(_, c)| !**c).map(|(w, _)| w).sum();
        let scale = slots as f64 / free_mass;
        let mut changed = false;
        for (i, w) in weights.iter().enumerate() {
            if !certain[i] && w * scale >= 1.0 {
                certain[i] = true;
                changed = true;
            }
        }
        if !changed {
            return weights
                .iter()
                .zip(&certain)
                .map(|(w, c)| if *c { 1.0 } else { w * scale })
                .collect();
        }
    }
}

/// Normalized importance weights `src_w * exp(target - proposal)`.
pub fn importance_weights(
    src: &SampleSet,
    target_log_density: impl Fn(&Params) -> f64,
    proposal_log_density: impl Fn(&Params) -> f64,
) -> Result<Vec<f64>> {
    let log_w: Vec<f64> = src
        .iter()
        .map(|(p, w)| target_log_density(p) - proposal_log_density(p) + w.ln())
        .collect();
    if log_w.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::InvalidArgument("densities must be finite on all samples".into()));
    }
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|v| (v - top).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / total).collect())
}

/// Samples over `(mu, nu)` only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSampleSet {
    pub samples: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl MarginalSampleSet {
    pub fn mean(&self) -> [f64; 2] {
        let mut m = [0.0; 2];
        for (s, w) in self.samples.iter().zip(&self.weights) {
            m[0] += w * s[0];
            m[1] += w * s[1];
        }
        m
    }
}

/// Integrates out the lapse by dropping the `eta` coordinate.
pub fn marginalize_lapse(s: &SampleSet) -> MarginalSampleSet {
    MarginalSampleSet {
        samples: s.samples.iter().map(|p| [p.mu, p.nu]).collect(),
        weights: s.weights.clone(),
    }
}

/// Posterior-averaged response probability `sum_i w_i psi(x; q_i)`.
pub fn predicted_response_prob(s: &SampleSet, x: f64, d: &Design) -> f64 {
    s.iter().map(|(p, w)| w * psi(x, p, d)).sum()
}

/// Draws of a functional, carrying the sample weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSamples {
    pub values: Vec<f64>,
    /// Renormalized over the kept samples.
    pub weights: Vec<f64>,
    /// Index into the source set for each kept value.
    pub source: Vec<usize>,
    pub dropped: usize,
}

impl FunctionalSamples {
    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().zip(&self.weights).map(|(v, w)| w * (v - m) * (v - m)).sum()
    }

    pub fn quantile(&self, prob: f64) -> f64 {
        weighted_quantile(&self.values, &self.weights, prob)
    }
}

/// Runs every sample through the functional.
///
/// Samples where the functional is undefined (an unattainable threshold
/// level, say) are dropped and counted; more than 1% dropped is an error.
pub fn functional_samples(s: &SampleSet, f: &Functional, d: &Design) -> Result<FunctionalSamples> {
    let mut values = Vec::with_capacity(s.len());
    let mut weights = Vec::with_capacity(s.len());
    let mut source = Vec::with_capacity(s.len());
    let mut dropped = 0;
    for (i, (p, w)) in s.iter().enumerate() {
        match evaluate_functional(f, p, d) {
            Ok(v) => {
                values.push(v);
                weights.push(w);
                source.push(i);
            }
            Err(Error::OutOfRange { .. }) | Err(Error::Domain(_)) => dropped += 1,
            Err(e) => return Err(e),
        }
    }
    if dropped as f64 > MAX_DROPPED_SHARE * s.len() as f64 || values.is_empty() {
        return Err(Error::DegenerateFunctional { dropped, total: s.len() });
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} of {} samples", f.label(), s.len());
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateFunctional { dropped, total: s.len() });
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(FunctionalSamples { values, weights, source, dropped })
}

/// Weighted quantile by linear interpolation between order statistics.
///
/// The sorted values are placed at cumulative positions
/// `(C_i - w_i) / (1 - w_last)`, which reduces to the usual `i / (n - 1)`
/// rule for uniform weights (so the median of two points is their midpoint).
pub fn weighted_quantile(values: &[f64], weights: &[f64], prob: f64) -> f64 {
    assert_eq!(values.len(), weights.len());
    assert!(!values.is_empty(), "quantile of an empty set");
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    quantile_sorted(values, weights, &idx, prob)
}

fn quantile_sorted(values: &[f64], weights: &[f64], idx: &[usize], prob: f64) -> f64 {
    let n = idx.len();
    if n == 1 {
        return values[idx[0]];
    }
    let total: f64 = idx.iter().map(|&i| weights[i]).sum();
    let last = weights[idx[n - 1]] / total;
    let denom = 1.0 - last;
    if denom <= 0.0 {
        return values[idx[n - 1]];
    }
    let mut cum = 0.0;
    let mut prev_pos = 0.0;
    let mut prev_val = values[idx[0]];
    for (j, &i) in idx.iter().enumerate() {
        let pos = (cum / denom).min(1.0);
        cum += weights[i] / total;
        if j > 0 && pos >= prob {
            let span = pos - prev_pos;
            if span <= 0.0 {
                return values[i];
            }
            let t = (prob - prev_pos) / span;
            return prev_val + t * (values[i] - prev_val);
        }
        prev_pos = pos;
        prev_val = values[i];
    }
    values[idx[n - 1]]
}

/// For each stimulus level, the requested quantiles of `{psi(x; q_i)}`.
pub fn posterior_response_quantiles(s: &SampleSet, x_grid: &[f64], probs: &[f64], d: &Design) -> Result<Vec<Vec<f64>>> {
    if probs.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
        return Err(Error::InvalidArgument("quantile levels must lie in (0, 1)".into()));
    }
    Ok(x_grid
        .iter()
        .map(|&x| {
            let vals: Vec<f64> = s.samples.iter().map(|p| psi(x, p, d)).collect();
            let mut idx: Vec<usize> = (0..vals.len()).collect();
            idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
            probs.iter().map(|&q| quantile_sorted(&vals, &s.weights, &idx, q)).collect()
        })
        .collect())
}

/// Simulated replicate datasets from the posterior predictive distribution.
///
/// Each replicate draws one parameter vector by weight, then a Bernoulli
/// response at every level of `x_seq`.
pub fn posterior_predictive_simulate(s: &SampleSet, x_seq: &[f64], design: &Design, m: usize, seed: u64) -> Result<Vec<Dataset>> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one replicate".into()));
    }
    let mut r = rng::from_seed(seed);
    (0..m)
        .map(|_| {
            let theta = s.samples[s.draw_index(&mut r)];
            let mut data = Dataset::new(*design);
            for &x in x_seq {
                let resp = r.random::<f64>() < psi(x, &theta, design);
                data.push(x, resp)?;
            }
            Ok(data)
        })
        .collect()
}
