//! Monte-Carlo mean-squared-error studies.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use psibayes_core::bayes::{
    functional_samples, importance_sample_posterior, laplace_fit_with, sample_laplace, Dataset, FitOptions,
    GaussianPrior, LaplacePosterior, SampleSet, DEFAULT_PROPOSAL_INFLATION,
};
use psibayes_core::placement::{select_next, PlacementPolicy};
use psibayes_core::psychometric::{logit, psi_inverse, Design, Functional, Params};
use psibayes_core::rng;

use crate::observer::{ObserverKind, SimulatedObserver};
use crate::scheme::{scheme_levels, FixedShape, SamplingScheme, Spread};
use crate::{Result, SimError};

pub const DEFAULT_POSTERIOR_SAMPLES: usize = 2000;

/// Quantity whose posterior mean is scored against the observer's truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "level", rename_all = "snake_case")]
pub enum Estimand {
    Mu,
    Nu,
    Threshold(f64),
}

impl Estimand {
    pub fn label(&self) -> String {
        match self {
            Estimand::Mu => "mu".into(),
            Estimand::Nu => "nu".into(),
            Estimand::Threshold(p) => format!("threshold({p})"),
        }
    }

    /// True value for the observer; a drifting observer is scored at its initial parameters.
    pub fn truth(&self, o: &SimulatedObserver) -> Result<f64> {
        match (self, o.kind) {
            (Estimand::Threshold(p), ObserverKind::Weibull { params }) => {
                let g = o.design.gamma();
                let w = ((p - params.lambda * g) / (1.0 - params.lambda) - g) / (1.0 - g);
                if !(w > 0.0 && w < 1.0) {
                    return Err(SimError::Config(format!("threshold level {p} not attainable by the Weibull observer")));
                }
                Ok(params.alpha * (-(1.0 - w).ln()).powf(1.0 / params.beta))
            }
            (_, ObserverKind::Weibull { .. }) => {
                Err(SimError::Config(format!("{} has no true value for a Weibull observer", self.label())))
            }
            _ => {
                let p = o.params_at(1).expect("gaussian observer");
                match self {
                    Estimand::Mu => Ok(p.mu),
                    Estimand::Nu => Ok(p.nu),
                    Estimand::Threshold(level) => Ok(psi_inverse(*level, &p, &o.design)?),
                }
            }
        }
    }

    fn estimate(&self, s: &SampleSet, d: &Design) -> Option<f64> {
        match self {
            Estimand::Mu => Some(s.mean()[0]),
            Estimand::Nu => Some(s.mean()[1]),
            Estimand::Threshold(p) => functional_samples(s, &Functional::Threshold(*p), d).ok().map(|f| f.mean()),
        }
    }
}

fn default_posterior_samples() -> usize {
    DEFAULT_POSTERIOR_SAMPLES
}

/// One simulated experiment design, repeated `replications` times.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    /// Scheme label written to the report.
    pub label: String,
    pub observer: SimulatedObserver,
    pub scheme: SamplingScheme,
    pub prior: GaussianPrior,
    /// Checkpoints; one run per replication is scored at every checkpoint.
    pub trial_counts: Vec<usize>,
    pub replications: usize,
    pub estimands: Vec<Estimand>,
    /// Importance samples used for the posterior means.
    #[serde(default = "default_posterior_samples")]
    pub posterior_samples: usize,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(SimError::Config("replications must be at least 1".into()));
        }
        if self.trial_counts.is_empty() || self.trial_counts.contains(&0) {
            return Err(SimError::Config("trial counts must be non-empty and positive".into()));
        }
        if self.estimands.is_empty() {
            return Err(SimError::Config("at least one estimand is required".into()));
        }
        if self.posterior_samples < 100 {
            return Err(SimError::Config("posterior_samples must be at least 100".into()));
        }
        for e in &self.estimands {
            e.truth(&self.observer)?;
        }
        self.scheme.validate(&self.observer.design)?;
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SimError::Config(e.to_string()))
    }

    fn checkpoints(&self) -> Vec<usize> {
        let mut c = self.trial_counts.clone();
        c.sort_unstable();
        c.dedup();
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub scheme: String,
    pub trials: usize,
    /// Mean of the posterior-mean estimates over successful replications.
    pub mean_estimate: f64,
    pub mse: f64,
    /// Successful replications.
    pub reps: usize,
    pub failures: usize,
    pub estimand: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub rows: Vec<MseRow>,
}

impl MseReport {
    pub fn find(&self, scheme: &str, estimand: &str, trials: usize) -> Option<&MseRow> {
        self.rows.iter().find(|r| r.scheme == scheme && r.estimand == estimand && r.trials == trials)
    }

    pub fn extend(&mut self, other: MseReport) {
        self.rows.extend(other.rows);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn from_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<MseRow>, _>>()?;
        Ok(Self { rows })
    }
}

/// Per checkpoint, per estimand: the estimate, or `None` on failure.
type RepOutcome = Vec<Vec<Option<f64>>>;

fn posterior_summary(lp: &LaplacePosterior, data: &Dataset, cfg: &StudyConfig, seed: u64) -> Option<SampleSet> {
    match importance_sample_posterior(lp, data, &cfg.prior, cfg.posterior_samples, DEFAULT_PROPOSAL_INFLATION, seed) {
        Ok(s) => Some(s),
        Err(e) => {
            log::debug!("importance sampling failed ({e}); falling back to the Laplace Gaussian");
            sample_laplace(lp, cfg.posterior_samples, seed).ok()
        }
    }
}

fn run_replication(cfg: &StudyConfig, checkpoints: &[usize], rep_seed: u64) -> RepOutcome {
    let d = cfg.observer.design;
    let mut resp_rng = rng::stream(rep_seed, 0);
    let mut x_rng = rng::stream(rep_seed, 1);
    let mut data = Dataset::new(d);
    let mut out: RepOutcome = vec![vec![None; cfg.estimands.len()]; checkpoints.len()];
    let adaptive = matches!(cfg.scheme, SamplingScheme::Adaptive { .. });
    let mut lp = LaplacePosterior::from_prior(&cfg.prior);
    let mut next_checkpoint = 0;
    let last = *checkpoints.last().expect("validated");

    for t in 1..=last {
        let x = match &cfg.scheme {
            SamplingScheme::UniformInterval { lo, hi } => x_rng.random_range(*lo..=*hi),
            SamplingScheme::ConstantStimuli { levels } => levels[(t - 1) % levels.len()],
            SamplingScheme::Adaptive { policy } => match select_next(policy, &lp, &d, rng::derive_seed(rep_seed, t as u64)) {
                Ok(sel) => sel.x,
                Err(e) => {
                    log::debug!("placement failed at trial {t}: {e}");
                    return out;
                }
            },
        };
        let r = cfg.observer.respond(x, t, &mut resp_rng).expect("scheme levels validated");
        data.push(x, r).expect("validated level");

        let is_checkpoint = checkpoints[next_checkpoint] == t;
        if adaptive || is_checkpoint {
            let opts = FitOptions { warm_start: Some(lp.mode), warm_only: true, ..FitOptions::default() };
            match laplace_fit_with(&data, &cfg.prior, &opts) {
                Ok(fit) => lp = fit,
                Err(e) => {
                    log::debug!("fit failed at trial {t}: {e}");
                    if adaptive {
                        return out;
                    }
                    next_checkpoint += usize::from(is_checkpoint);
                    continue;
                }
            }
        }
        if is_checkpoint {
            let seed = rng::derive_seed(rep_seed, (1 << 32) | t as u64);
            if let Some(s) = posterior_summary(&lp, &data, cfg, seed) {
                for (slot, e) in out[next_checkpoint].iter_mut().zip(&cfg.estimands) {
                    *slot = e.estimate(&s, &d);
                }
            }
            next_checkpoint += 1;
        }
    }
    out
}

/// Simulates `cfg.replications` experiments and scores the posterior means.
///
/// Each replication is one run scored at every checkpoint, with its own
/// random streams derived from `(seed, replication)`. Failed fits count
/// as failures for that checkpoint (for adaptive runs, for all later ones).
pub fn run_study(cfg: &StudyConfig, seed: u64) -> Result<MseReport> {
    cfg.validate()?;
    let checkpoints = cfg.checkpoints();
    let truths: Vec<f64> = cfg.estimands.iter().map(|e| e.truth(&cfg.observer)).collect::<Result<_>>()?;
    let outcomes: Vec<RepOutcome> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_replication(cfg, &checkpoints, rng::derive_seed(seed, rep as u64)))
        .collect();

    let mut rows = Vec::new();
    for (ei, e) in cfg.estimands.iter().enumerate() {
        for (ci, &trials) in checkpoints.iter().enumerate() {
            let vals: Vec<f64> = outcomes.iter().filter_map(|o| o[ci][ei]).collect();
            let n = vals.len();
            let (mean_estimate, mse) = if n == 0 {
                (f64::NAN, f64::NAN)
            } else {
                let m = vals.iter().sum::<f64>() / n as f64;
                let mse = vals.iter().map(|v| (v - truths[ei]).powi(2)).sum::<f64>() / n as f64;
                (m, mse)
            };
            rows.push(MseRow {
                scheme: cfg.label.clone(),
                trials,
                mean_estimate,
                mse,
                reps: n,
                failures: cfg.replications - n,
                estimand: e.label(),
            });
        }
    }
    Ok(MseReport { rows })
}

/// Settings shared by the convergence and robustness studies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyOptions {
    pub replications: usize,
    pub trial_counts: Vec<usize>,
    /// Posterior samples per placement decision in adaptive runs.
    pub adaptive_samples: usize,
    pub posterior_samples: usize,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            replications: 150,
            trial_counts: vec![50, 100, 200, 300, 500],
            adaptive_samples: 1000,
            posterior_samples: DEFAULT_POSTERIOR_SAMPLES,
        }
    }
}

/// Stimulus domain of the reference studies; wide enough for the widest scheme.
pub const REFERENCE_DOMAIN: (f64, f64) = (-5.0, 12.0);

/// 2AFC observer with `mu = 3.5`, `nu = 0.5`, 2% lapses.
pub fn reference_observer() -> SimulatedObserver {
    let d = Design::two_afc(REFERENCE_DOMAIN.0, REFERENCE_DOMAIN.1).expect("valid domain");
    let p = Params::from_natural(3.5, 0.5f64.exp(), 0.02).expect("valid truth");
    SimulatedObserver::gaussian(p, d)
}

/// `N(mu_mean, mu_sd)` on `mu`, `N(0, sqrt 0.5)` on `nu`, `N(logit 0.02, 0.3)` on `eta`.
pub fn reference_prior(mu_mean: f64, mu_sd: f64) -> GaussianPrior {
    GaussianPrior::new([mu_mean, 0.0, logit(0.02)], [mu_sd, 0.5f64.sqrt(), 0.3]).expect("valid prior")
}

fn base_config(label: &str, scheme: SamplingScheme, prior: GaussianPrior, opts: &StudyOptions) -> StudyConfig {
    StudyConfig {
        label: label.into(),
        observer: reference_observer(),
        scheme,
        prior,
        trial_counts: opts.trial_counts.clone(),
        replications: opts.replications,
        estimands: vec![Estimand::Mu, Estimand::Nu],
        posterior_samples: opts.posterior_samples,
    }
}

fn psi_scheme(opts: &StudyOptions) -> SamplingScheme {
    let d = reference_observer().design;
    SamplingScheme::Adaptive { policy: PlacementPolicy::psi(&d).with_sample_count(opts.adaptive_samples) }
}

/// Psi method against uniform and constant-stimuli sampling at three spreads.
///
/// Labels: `psi`, `uniform-{wide,medium,tight}`, `constant-{wide,medium,tight}`.
pub fn convergence_configs(opts: &StudyOptions) -> Result<Vec<StudyConfig>> {
    let o = reference_observer();
    let truth = o.params_at(1).expect("gaussian");
    let prior = reference_prior(3.0, 0.5f64.sqrt());
    let mut out = vec![base_config("psi", psi_scheme(opts), prior, opts)];
    for (shape, name) in [(FixedShape::Uniform, "uniform"), (FixedShape::ConstantStimuli, "constant")] {
        for spread in [Spread::Wide, Spread::Medium, Spread::Tight] {
            let scheme = scheme_levels(shape, &truth, spread, &o.design)?;
            out.push(base_config(&format!("{name}-{}", spread.label()), scheme, prior, opts));
        }
    }
    Ok(out)
}

pub fn convergence_study(opts: &StudyOptions, seed: u64) -> Result<MseReport> {
    let mut report = MseReport::default();
    for cfg in convergence_configs(opts)? {
        report.extend(run_study(&cfg, seed)?);
    }
    Ok(report)
}

/// Psi-method runs under the three priors on `mu`:
/// `prior1` N(3, sqrt 0.5), `prior2` N(2, sqrt 0.5), `prior3` N(3, 1).
pub fn robustness_configs(opts: &StudyOptions) -> Vec<StudyConfig> {
    [("prior1", 3.0, 0.5f64.sqrt()), ("prior2", 2.0, 0.5f64.sqrt()), ("prior3", 3.0, 1.0)]
        .into_iter()
        .map(|(label, m, s)| {
            let mut cfg = base_config(label, psi_scheme(opts), reference_prior(m, s), opts);
            cfg.estimands = vec![Estimand::Mu];
            cfg
        })
        .collect()
}

pub fn robustness_study_with(opts: &StudyOptions, seed: u64) -> Result<MseReport> {
    let mut report = MseReport::default();
    for cfg in robustness_configs(opts) {
        report.extend(run_study(&cfg, seed)?);
    }
    Ok(report)
}

/// Robustness study with the default options (150 replications, 50 to 500 trials).
pub fn robustness_study(seed: u64) -> Result<MseReport> {
    robustness_study_with(&StudyOptions::default(), seed)
}
