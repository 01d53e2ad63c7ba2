//! Information criteria evaluated on a weighted sample set.

use serde::{Deserialize, Serialize};

use crate::bayes::{functional_samples, SampleSet};
use crate::density::{gaussian_entropy, kde_entropy, kde_fit, BandwidthRule};
use crate::error::{Error, Result};
use crate::normal;
use crate::psychometric::{Design, Functional, Task};

/// Conditional variances below this are treated as a collapsed posterior.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Entropy (nats) of a Bernoulli variable with success probability `p`.
pub fn bernoulli_entropy(p: f64) -> f64 {
    let mut h = 0.0;
    if p > 0.0 {
        h -= p * p.ln();
    }
    if p < 1.0 {
        h -= (1.0 - p) * (1.0 - p).ln();
    }
    h
}

/// How the T-method entropies are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TEstimator {
    /// Moment-matched Gaussian entropies.
    #[default]
    GaussianMoments,
    /// Kernel density entropies of the weighted conditional samples.
    KdeNonparametric,
}

/// A sample set reduced to what `psi` needs: `psi = base + span * Phi((x - mu) / sigma)`.
///
/// Evaluations agree bit-for-bit with [`crate::psychometric::psi`].
#[derive(Debug, Clone)]
pub struct PreparedSamples {
    mu: Vec<f64>,
    sigma: Vec<f64>,
    base: Vec<f64>,
    span: Vec<f64>,
    weights: Vec<f64>,
}

impl PreparedSamples {
    pub fn new(s: &SampleSet, d: &Design) -> Self {
        let n = s.len();
        let mut out = Self {
            mu: Vec::with_capacity(n),
            sigma: Vec::with_capacity(n),
            base: Vec::with_capacity(n),
            span: Vec::with_capacity(n),
            weights: s.weights().to_vec(),
        };
        for p in s.samples() {
            let lambda = p.lambda();
            let (base, span) = match d.task {
                Task::ForcedChoice { gamma } => (gamma, (1.0 - gamma) * (1.0 - lambda)),
                Task::YesNo => (0.5 * lambda, 1.0 - lambda),
            };
            out.mu.push(p.mu);
            out.sigma.push(p.sigma());
            out.base.push(base);
            out.span.push(span);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn psi(&self, i: usize, x: f64) -> f64 {
        self.base[i] + self.span[i] * normal::cdf((x - self.mu[i]) / self.sigma[i])
    }

    /// `h(sum w psi) - sum w h(psi)` at `x`.
    pub fn psi_information(&self, x: f64) -> f64 {
        let mut mean = 0.0;
        let mut cond = 0.0;
        for i in 0..self.len() {
            let p = self.psi(i, x);
            let w = self.weights[i];
            mean += w * p;
            cond += w * bernoulli_entropy(p);
        }
        bernoulli_entropy(mean) - cond
    }

    /// T-method information at `x` for functional values `f` attached to
    /// sample indices `source` with weights `w`.
    pub fn t_information(&self, x: f64, f: &[f64], w: &[f64], source: &[usize], est: TEstimator) -> Result<f64> {
        let p: Vec<f64> = source.iter().map(|&i| self.psi(i, x)).collect();
        conditional_information(f, w, &p, est)
    }
}

/// Weighted mean and variance; `None` when the weights sum to zero.
fn weighted_moments(f: &[f64], w: impl Fn(usize) -> f64) -> Option<(f64, f64)> {
    let mut total = 0.0;
    let mut first = 0.0;
    for (i, v) in f.iter().enumerate() {
        let wi = w(i);
        total += wi;
        first += wi * v;
    }
    if !(total > 0.0) {
        return None;
    }
    let mean = first / total;
    let var = f.iter().enumerate().map(|(i, v)| w(i) * (v - mean) * (v - mean)).sum::<f64>() / total;
    Some((total, var))
}

fn gaussian_t_information(f: &[f64], w: &[f64], p: &[f64]) -> Result<f64> {
    let (_, var) = weighted_moments(f, |i| w[i]).ok_or(Error::DegenerateVariance { variance: 0.0 })?;
    if var < VARIANCE_FLOOR {
        // f does not vary over the posterior, so no response can inform it.
        return Ok(0.0);
    }
    let mut info = gaussian_entropy(var)?;
    let conditionals: [&dyn Fn(usize) -> f64; 2] = [&|i| w[i] * (1.0 - p[i]), &|i| w[i] * p[i]];
    for weight in conditionals {
        if let Some((pr, v)) = weighted_moments(f, weight) {
            if v < VARIANCE_FLOOR {
                return Err(Error::DegenerateVariance { variance: v });
            }
            info -= pr * gaussian_entropy(v)?;
        }
    }
    Ok(info)
}

fn kde_t_information(f: &[f64], w: &[f64], p: &[f64]) -> Result<f64> {
    let (_, var) = weighted_moments(f, |i| w[i]).ok_or(Error::DegenerateVariance { variance: 0.0 })?;
    if var < VARIANCE_FLOOR {
        return Ok(0.0);
    }
    let mut info = kde_entropy(&kde_fit(f, Some(w), BandwidthRule::Silverman)?)?;
    for r in [false, true] {
        let wr: Vec<f64> = w.iter().zip(p).map(|(wi, pi)| if r { wi * pi } else { wi * (1.0 - pi) }).collect();
        let pr: f64 = wr.iter().sum();
        if pr > 0.0 {
            let k = kde_fit(f, Some(&wr), BandwidthRule::Silverman).map_err(|e| match e {
                Error::AllIdentical => Error::DegenerateVariance { variance: 0.0 },
                e => e,
            })?;
            info -= pr * kde_entropy(&k)?;
        }
    }
    Ok(info)
}

/// Information (nats) about a scalar with weighted draws `f` carried by a
/// binary response with `P(r = 1 | f_i) = p[i]`.
pub fn conditional_information(f: &[f64], w: &[f64], p: &[f64], est: TEstimator) -> Result<f64> {
    if f.len() != w.len() || f.len() != p.len() || f.is_empty() {
        return Err(Error::InvalidArgument("values, weights and probabilities must have equal non-zero length".into()));
    }
    match est {
        TEstimator::GaussianMoments => gaussian_t_information(f, w, p),
        TEstimator::KdeNonparametric => kde_t_information(f, w, p),
    }
}

/// Mutual information (nats) between the parameters and the response at `x`.
pub fn psi_information(x: f64, s: &SampleSet, d: &Design) -> f64 {
    PreparedSamples::new(s, d).psi_information(x)
}

/// Functional values as fed to the T-method entropies: widths on a log
/// scale, everything else as is.
pub(crate) fn transformed_functional(s: &SampleSet, f: &Functional, d: &Design) -> Result<(Vec<f64>, Vec<f64>, Vec<usize>)> {
    let fs = functional_samples(s, f, d)?;
    let values = match f {
        Functional::Width(_) => fs.values.iter().map(|v| v.ln()).collect(),
        _ => fs.values,
    };
    Ok((values, fs.weights, fs.source))
}

/// Mutual information (nats) between the functional `f` and the response at `x`.
pub fn t_information(x: f64, s: &SampleSet, f: &Functional, d: &Design, est: TEstimator) -> Result<f64> {
    let (values, weights, source) = transformed_functional(s, f, d)?;
    PreparedSamples::new(s, d).t_information(x, &values, &weights, &source, est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psychometric::{psi, Params};

    #[test]
    fn bernoulli_entropy_values() {
        assert!((bernoulli_entropy(0.5) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(bernoulli_entropy(0.0), 0.0);
        assert_eq!(bernoulli_entropy(1.0), 0.0);
        assert!((bernoulli_entropy(0.75) - 0.562_335_144_618_808_5).abs() < 1e-12);
        for p in [0.01, 0.2, 0.37] {
            assert!((bernoulli_entropy(p) - bernoulli_entropy(1.0 - p)).abs() < 1e-15);
        }
    }

    #[test]
    fn prepared_psi_matches_reference() {
        let d = Design::two_afc(-5.0, 5.0).unwrap();
        let s = SampleSet::uniform(vec![Params::new(0.3, -0.2, -3.0).unwrap(), Params::new(-1.0, 0.4, -5.0).unwrap()]).unwrap();
        let prep = PreparedSamples::new(&s, &d);
        for x in [-3.0, 0.0, 0.7, 4.0] {
            for (i, p) in s.samples().iter().enumerate() {
                assert_eq!(prep.psi(i, x), psi(x, p, &d));
            }
        }
    }

    #[test]
    fn single_sample_has_no_information() {
        let d = Design::two_afc(-5.0, 5.0).unwrap();
        let s = SampleSet::uniform(vec![Params::new(0.3, -0.2, -3.0).unwrap()]).unwrap();
        assert_eq!(psi_information(0.1, &s, &d), 0.0);
    }

    #[test]
    fn two_sample_plug_in_value() {
        // With lambda ~ 0 and gamma = 0.5, psi = 0.6 and 0.9 at x = 0 when
        // Phi(-mu/sigma) = 0.2 and 0.8.
        let d = Design::two_afc(-5.0, 5.0).unwrap();
        let eta = -800.0;
        let a = Params::new(-crate::normal::quantile(0.2), 0.0, eta).unwrap();
        let b = Params::new(-crate::normal::quantile(0.8), 0.0, eta).unwrap();
        let s = SampleSet::uniform(vec![a, b]).unwrap();
        let expected = bernoulli_entropy(0.75) - 0.5 * (bernoulli_entropy(0.6) + bernoulli_entropy(0.9));
        assert!((psi_information(0.0, &s, &d) - expected).abs() < 1e-12);
        assert!((expected - 0.063_287_824_418_455_93).abs() < 1e-15);
    }

    #[test]
    fn t_information_independent_response_is_zero() {
        // Identical mu, sigma and lapse give identical psi but different slopes
        // are impossible then; use a custom functional instead.
        let d = Design::two_afc(-5.0, 5.0).unwrap();
        let samples: Vec<Params> = (0..50).map(|_| Params::new(0.0, 0.0, -4.0).unwrap()).collect();
        let s = SampleSet::uniform(samples).unwrap();
        let counter = std::sync::atomic::AtomicUsize::new(0);
        let f = Functional::Custom(crate::psychometric::CustomFunctional::new("index", move |_| {
            counter.fetch_add(1, std::sync::atomic::Ordering::Relaxed) as f64
        }));
        let info = t_information(0.4, &s, &f, &d, TEstimator::GaussianMoments).unwrap();
        assert!(info.abs() < 1e-10, "{info}");
    }

    #[test]
    fn constant_functional_has_no_information() {
        let d = Design::two_afc(-5.0, 5.0).unwrap();
        let samples: Vec<Params> = (0..50).map(|i| Params::new(i as f64 * 0.1, 0.0, -4.0).unwrap()).collect();
        let s = SampleSet::uniform(samples).unwrap();
        let f = Functional::Slope;
        for est in [TEstimator::GaussianMoments, TEstimator::KdeNonparametric] {
            assert_eq!(t_information(2.0, &s, &f, &d, est).unwrap(), 0.0);
        }
    }
}
