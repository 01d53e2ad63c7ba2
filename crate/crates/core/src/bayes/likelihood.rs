//! Likelihood and unnormalized log posterior.

use crate::bayes::{Dataset, GaussianPrior, TrialRecord};
use crate::psychometric::{psi_with_gradient, Design, Params};

/// Floor applied to a response probability before taking its log.
pub const LOG_FLOOR: f64 = 1e-300;

/// Log-likelihood value plus the number of trials whose probability hit the floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodEval {
    pub value: f64,
    pub floored: usize,
}

#[inline]
fn trial_term(t: &TrialRecord, par: &Params, d: &Design) -> (f64, [f64; 3], bool) {
    let e = psi_with_gradient(t.x, par, d);
    let (prob, sign) = if t.response { (e.p, 1.0) } else { (e.q, -1.0) };
    if prob < LOG_FLOOR {
        (LOG_FLOOR.ln(), [0.0; 3], true)
    } else {
        let s = sign / prob;
        (prob.ln(), [s * e.grad[0], s * e.grad[1], s * e.grad[2]], false)
    }
}

pub fn log_likelihood_checked(data: &Dataset, par: &Params) -> LikelihoodEval {
    let mut value = 0.0;
    let mut floored = 0;
    for t in data.trials() {
        let (v, _, f) = trial_term(t, par, &data.design);
        value += v;
        floored += f as usize;
    }
    LikelihoodEval { value, floored }
}

/// `sum_i r_i ln psi(x_i) + (1 - r_i) ln(1 - psi(x_i))`; zero for an empty dataset.
pub fn log_likelihood(data: &Dataset, par: &Params) -> f64 {
    log_likelihood_checked(data, par).value
}

pub fn log_posterior_unnorm(data: &Dataset, prior: &GaussianPrior, par: &Params) -> f64 {
    log_likelihood(data, par) + prior.log_density(par)
}

/// Log posterior and its gradient with respect to `(mu, nu, eta)`.
pub fn log_posterior_with_gradient(data: &Dataset, prior: &GaussianPrior, par: &Params) -> (f64, [f64; 3]) {
    let mut value = prior.log_density(par);
    let mut grad = prior.grad_log_density(par);
    for t in data.trials() {
        let (v, g, _) = trial_term(t, par, &data.design);
        value += v;
        for k in 0..3 {
            grad[k] += g[k];
        }
    }
    (value, grad)
}

/// Unnormalized log posterior maintained by sequential updating:
/// each trial adds its log-likelihood term to the running log density.
#[derive(Debug, Clone)]
pub struct SequentialPosterior {
    prior: GaussianPrior,
    data: Dataset,
}

impl SequentialPosterior {
    pub fn new(prior: GaussianPrior, design: Design) -> Self {
        Self { prior, data: Dataset::new(design) }
    }

    pub fn update(&mut self, x: f64, response: bool) -> crate::Result<()> {
        self.data.push(x, response).map(|_| ())
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// Evaluates the running log density by folding the trial terms onto the
    /// prior one trial at a time, in the order they arrived.
    pub fn log_density(&self, par: &Params) -> f64 {
        self.data
            .trials()
            .iter()
            .fold(self.prior.log_density(par), |acc, t| acc + trial_term(t, par, &self.data.design).0)
    }
}
