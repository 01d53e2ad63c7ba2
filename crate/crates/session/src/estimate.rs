use serde::{Deserialize, Serialize};

use psibayes_core::bayes::{
    functional_samples, importance_sample_posterior, posterior_entropy_gaussian, posterior_response_quantiles,
    predicted_response_prob, sample_laplace, weighted_quantile, SampleSet, DEFAULT_PROPOSAL_INFLATION,
};
use psibayes_core::normal;
use psibayes_core::psychometric::{logistic, Design, Functional, Params, Task};
use psibayes_core::rng;

use crate::error::SessionResult;
use crate::state::{EstimateSummary, SessionState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub samples: usize,
    /// Defaults to a stream derived from the session seed and trial count.
    pub seed: Option<u64>,
    /// Central credible mass, e.g. 0.95.
    pub level: f64,
    pub curve_points: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self { samples: 5000, seed: None, level: 0.95, curve_points: 61 }
    }
}

/// Parameters in both parameterizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub mu: f64,
    pub nu: f64,
    pub eta: f64,
    pub sigma: f64,
    pub lambda: f64,
}

/// `[lo, hi]` per parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSet {
    pub mu: [f64; 2],
    pub nu: [f64; 2],
    pub eta: [f64; 2],
    pub sigma: [f64; 2],
    pub lambda: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub interval: [f64; 2],
    /// Samples on which the functional was undefined.
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseCurve {
    pub x: Vec<f64>,
    /// Posterior mean response probability.
    pub mean: Vec<f64>,
    pub quantile_levels: Vec<f64>,
    /// `bands[i][j]`: quantile `quantile_levels[j]` at `x[i]`.
    pub bands: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub trials: usize,
    pub level: f64,
    pub mode: ParamSummary,
    /// Importance-weighted posterior mean; `sigma` and `lambda` are means of the transformed draws.
    pub mean: ParamSummary,
    /// Empirical quantiles of the weighted posterior draws.
    pub quantile_intervals: IntervalSet,
    /// Mode ± z·sd from the Hessian, mapped through exp/logistic for sigma/lambda.
    pub hessian_intervals: IntervalSet,
    pub functionals: Vec<FunctionalSummary>,
    /// Functionals that could not be evaluated, with the reason.
    pub unavailable: Vec<(String, String)>,
    pub response_curve: ResponseCurve,
    /// Gaussian entropy of the Laplace posterior (nats).
    pub entropy: f64,
    pub effective_sample_size: f64,
    pub seed: u64,
}

impl EstimateReport {
    pub fn summary(&self) -> EstimateSummary {
        EstimateSummary { trials: self.trials, mean: [self.mean.mu, self.mean.nu, self.mean.eta], entropy: self.entropy }
    }
}

fn summary_of(p: &Params) -> ParamSummary {
    ParamSummary { mu: p.mu, nu: p.nu, eta: p.eta, sigma: p.sigma(), lambda: p.lambda() }
}

/// Threshold level halfway between chance and ceiling.
pub fn midpoint_level(d: &Design) -> f64 {
    match d.task {
        Task::ForcedChoice { gamma } => gamma + 0.5 * (1.0 - gamma),
        Task::YesNo => 0.5,
    }
}

/// Default functionals reported: midpoint threshold, width at margin 0.1, slope.
pub fn default_functionals(d: &Design) -> Vec<Functional> {
    vec![Functional::Threshold(midpoint_level(d)), Functional::Width(0.1), Functional::Slope]
}

/// Posterior draws used for reporting: importance-weighted, or plain Laplace
/// draws when the weights degenerate.
pub(crate) fn posterior_draws(st: &SessionState, n: usize, seed: u64) -> SessionResult<SampleSet> {
    let lp = &st.cached_posterior;
    match importance_sample_posterior(lp, &st.trials, &st.config.prior, n, DEFAULT_PROPOSAL_INFLATION, seed) {
        Ok(s) => Ok(s),
        Err(e) => {
            log::warn!("importance weights degenerate ({e}); reporting Laplace draws");
            Ok(sample_laplace(lp, n, seed)?)
        }
    }
}

pub(crate) fn default_report_seed(st: &SessionState, salt: u64) -> u64 {
    rng::derive_seed(st.config.seed, (salt << 40) | st.trial_count() as u64)
}

impl SessionState {
    /// Posterior summary. Does not change the session.
    pub fn estimate(&self, opts: &EstimateOptions) -> SessionResult<EstimateReport> {
        if !(opts.level > 0.0 && opts.level < 1.0) || opts.samples < 2 || opts.curve_points < 2 {
            return Err(crate::SessionError::Invalid("level in (0, 1), samples >= 2 and curve_points >= 2 required".into()));
        }
        let d = &self.config.design;
        let seed = opts.seed.unwrap_or_else(|| default_report_seed(self, 1));
        let s = posterior_draws(self, opts.samples, seed)?;
        let lp = &self.cached_posterior;
        let (qlo, qhi) = (0.5 * (1.0 - opts.level), 0.5 * (1.0 + opts.level));

        let col = |f: &dyn Fn(&Params) -> f64| -> Vec<f64> { s.samples().iter().map(f).collect() };
        let cols = [col(&|p| p.mu), col(&|p| p.nu), col(&|p| p.eta), col(&|p| p.sigma()), col(&|p| p.lambda())];
        let w = s.weights();
        let wmean = |v: &[f64]| v.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        let q = |v: &[f64]| [weighted_quantile(v, w, qlo), weighted_quantile(v, w, qhi)];
        let mean = ParamSummary {
            mu: wmean(&cols[0]),
            nu: wmean(&cols[1]),
            eta: wmean(&cols[2]),
            sigma: wmean(&cols[3]),
            lambda: wmean(&cols[4]),
        };
        let quantile_intervals =
            IntervalSet { mu: q(&cols[0]), nu: q(&cols[1]), eta: q(&cols[2]), sigma: q(&cols[3]), lambda: q(&cols[4]) };

        let z = normal::quantile(qhi);
        let sd = lp.sd();
        let m = lp.mode;
        let around = |c: f64, s: f64| [c - z * s, c + z * s];
        let (nu_i, eta_i) = (around(m.nu, sd[1]), around(m.eta, sd[2]));
        let hessian_intervals = IntervalSet {
            mu: around(m.mu, sd[0]),
            nu: nu_i,
            eta: eta_i,
            sigma: nu_i.map(f64::exp),
            lambda: eta_i.map(logistic),
        };

        let mut functionals = Vec::new();
        let mut unavailable = Vec::new();
        for f in default_functionals(d) {
            match functional_samples(&s, &f, d) {
                Ok(fs) => functionals.push(FunctionalSummary {
                    name: f.label(),
                    mean: fs.mean(),
                    sd: fs.variance().sqrt(),
                    interval: [fs.quantile(qlo), fs.quantile(qhi)],
                    dropped: fs.dropped,
                }),
                Err(e) => unavailable.push((f.label(), e.to_string())),
            }
        }

        let n = opts.curve_points;
        let x: Vec<f64> = (0..n).map(|i| d.x_lo + (d.x_hi - d.x_lo) * i as f64 / (n - 1) as f64).collect();
        let quantile_levels = vec![qlo, 0.5, qhi];
        let bands = posterior_response_quantiles(&s, &x, &quantile_levels, d)?;
        let curve_mean = x.iter().map(|&xi| predicted_response_prob(&s, xi, d)).collect();

        Ok(EstimateReport {
            trials: self.trial_count(),
            level: opts.level,
            mode: summary_of(&m),
            mean,
            quantile_intervals,
            hessian_intervals,
            functionals,
            unavailable,
            response_curve: ResponseCurve { x, mean: curve_mean, quantile_levels, bands },
            entropy: posterior_entropy_gaussian(lp),
            effective_sample_size: s.effective_size(),
            seed,
        })
    }
}
