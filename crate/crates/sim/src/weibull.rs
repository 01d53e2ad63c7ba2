//! Least-squares matching of a Weibull psychometric function to a cumulative Gaussian.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use serde::{Deserialize, Serialize};

use psibayes_core::bayes::GaussianPrior;
use psibayes_core::normal;
use psibayes_core::psychometric::{logit, Params, WeibullParams};
use psibayes_core::rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Result, SimError};

/// Simpson panels over `[0, x_hi]`.
pub const QUADRATURE_PANELS: usize = 2048;
const RESTART_SCALES: [(f64, f64); 5] = [(1.0, 1.0), (0.9, 1.0), (1.1, 1.0), (1.0, 0.5), (1.0, 2.0)];
/// Relative perturbation used to confirm a local minimum.
pub const OPTIMALITY_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullMatch {
    pub params: WeibullParams,
    /// Integrated squared difference at the optimum.
    pub objective: f64,
    /// Upper integration limit.
    pub x_hi: f64,
}

/// Upper integration limit for a target: 1.5 times the level where the
/// Gaussian is within 1e-6 of its ceiling.
pub fn integration_limit(target: &Params) -> f64 {
    let s = target.sigma();
    1.5 * (target.mu + normal::upper_quantile(1e-6) * s).max(s)
}

/// `∫_0^{x_hi} (psi - psi_w)^2 dx` by composite Simpson.
///
/// Both functions rise from `gamma` to `1 - lambda (1 - gamma)`; the common
/// factor `((1 - gamma)(1 - lambda))^2` multiplies the squared difference of
/// the normal CDF and the Weibull function.
pub fn l2_objective(target: &Params, alpha: f64, beta: f64, gamma: f64, lambda: f64, x_hi: f64) -> f64 {
    let (mu, sigma) = (target.mu, target.sigma());
    let scale = ((1.0 - gamma) * (1.0 - lambda)).powi(2);
    let n = QUADRATURE_PANELS;
    let h = x_hi / n as f64;
    let f = |x: f64| {
        let w = -(-(x / alpha).powf(beta)).exp_m1();
        let d = normal::cdf((x - mu) / sigma) - w;
        d * d
    };
    let mut acc = f(0.0) + f(x_hi);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    scale * acc * h / 3.0
}

struct Cost {
    target: Params,
    gamma: f64,
    lambda: f64,
    x_hi: f64,
}

impl CostFunction for Cost {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let v = l2_objective(&self.target, p[0].exp(), p[1].exp(), self.gamma, self.lambda, self.x_hi);
        Ok(if v.is_finite() { v } else { f64::MAX })
    }
}

fn is_local_min(c: &Cost, alpha: f64, beta: f64, value: f64) -> bool {
    [(1.0 + OPTIMALITY_STEP, 1.0), (1.0 - OPTIMALITY_STEP, 1.0), (1.0, 1.0 + OPTIMALITY_STEP), (1.0, 1.0 - OPTIMALITY_STEP)]
        .iter()
        .all(|(a, b)| l2_objective(&c.target, alpha * a, beta * b, c.gamma, c.lambda, c.x_hi) >= value)
}

/// Weibull `(alpha, beta)` closest in L2 to the Gaussian `target`.
///
/// Nelder-Mead in `(ln alpha, ln beta)` from five deterministic starts
/// around the moment-matched guess (`w(alpha) = Phi(z)` at `z = 0.337`, equal
/// slopes there). The best start that passes the ±1% perturbation check wins.
pub fn match_weibull(target: &Params, gamma: f64, lambda: f64) -> Result<WeibullMatch> {
    if !(0.0..1.0).contains(&gamma) || !(0.0..1.0).contains(&lambda) {
        return Err(SimError::Config(format!("gamma {gamma} and lambda {lambda} must lie in [0, 1)")));
    }
    let sigma = target.sigma();
    let c = Cost { target: *target, gamma, lambda, x_hi: integration_limit(target) };
    let alpha0 = (target.mu + 0.337 * sigma).max(0.1 * sigma);
    let beta0 = 1.0235 * alpha0 / sigma;

    let mut best: Option<(f64, f64, f64)> = None;
    for (sa, sb) in RESTART_SCALES {
        let p0 = vec![(alpha0 * sa).ln(), (beta0 * sb).ln()];
        let simplex = vec![p0.clone(), vec![p0[0] + 0.1, p0[1]], vec![p0[0], p0[1] + 0.1]];
        let solver = NelderMead::new(simplex).with_sd_tolerance(1e-14).map_err(|e| SimError::Config(e.to_string()))?;
        let cost = Cost { ..c };
        let run = match Executor::new(cost, solver).configure(|s| s.max_iters(1000)).run() {
            Ok(r) => r,
            Err(e) => {
                log::debug!("Nelder-Mead start failed: {e}");
                continue;
            }
        };
        let state = run.state();
        let Some(p) = state.get_best_param() else { continue };
        let (alpha, beta, value) = (p[0].exp(), p[1].exp(), state.get_best_cost());
        if !is_local_min(&c, alpha, beta, value) {
            continue;
        }
        if best.is_none_or(|b| value < b.2) {
            best = Some((alpha, beta, value));
        }
    }
    let (alpha, beta, objective) =
        best.ok_or_else(|| SimError::NonConvergence(format!("no start reached a local minimum for {target:?}")))?;
    Ok(WeibullMatch { params: WeibullParams::new(alpha, beta, lambda)?, objective, x_hi: c.x_hi })
}

/// Prior assumed for the Weibull-matching setup (`mu = 6`, `nu = 0.5`
/// observer): the offsets of the reference study, `mu ~ N(5.5, sqrt 0.5)`,
/// `nu ~ N(0, sqrt 0.5)`, `eta ~ N(logit 0.02, 0.3)`.
pub fn weibull_setup_prior() -> GaussianPrior {
    GaussianPrior::new([5.5, 0.0, logit(0.02)], [0.5f64.sqrt(), 0.5f64.sqrt(), 0.3]).expect("valid prior")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogBetaSamples {
    pub values: Vec<f64>,
    pub failures: usize,
}

impl LogBetaSamples {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn sd(&self) -> f64 {
        let m = self.mean();
        let n = self.values.len() as f64;
        (self.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    }
}

/// Draws `n` parameter vectors from `prior`, matches each, and returns `ln beta`.
pub fn prior_log_beta(prior: &GaussianPrior, gamma: f64, n: usize, seed: u64) -> Result<LogBetaSamples> {
    use rayon::prelude::*;
    let mut r = rng::from_seed(seed);
    let draws: Vec<Params> = (0..n)
        .map(|_| {
            let z: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut r));
            prior.unstandardize(&z)
        })
        .collect();
    let fits: Vec<Option<f64>> = draws
        .par_iter()
        .map(|p| match_weibull(p, gamma, p.lambda()).ok().map(|m| m.params.beta.ln()))
        .collect();
    let values: Vec<f64> = fits.iter().flatten().copied().collect();
    Ok(LogBetaSamples { failures: n - values.len(), values })
}
