//! Plot-ready exports: cost curve, posterior slices, function draws,
//! response-probability contours and posterior predictive triplets.

use serde::{Deserialize, Serialize};

use psibayes_core::bayes::{
    log_posterior_unnorm, posterior_predictive_simulate, posterior_response_quantiles, sample_laplace, Dataset,
    GaussianPrior, LaplacePosterior, SampleSet,
};
use psibayes_core::psychometric::{psi, psi_inverse, Design, Params};

use crate::error::{SessionError, SessionResult};
use crate::estimate::{default_report_seed, midpoint_level, posterior_draws, ParamSummary};
use crate::state::SessionState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsOptions {
    pub seed: Option<u64>,
    pub draws: usize,
    pub grid_points: usize,
    pub slice_points: usize,
    pub ppc_replicates: usize,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        Self { seed: None, draws: 30, grid_points: 61, slice_points: 41, ppc_replicates: 3 }
    }
}

/// One sampled psychometric function evaluated on the shared level grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionDraw {
    pub params: ParamSummary,
    /// Midpoint threshold, if attainable.
    pub threshold: Option<f64>,
    pub p: Vec<f64>,
}

/// Posterior density on a 2-D slice through the mode, scaled to peak 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub axes: [String; 2],
    pub fixed: (String, f64),
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `density[i][j]` at `(x[i], y[j])`.
    pub density: Vec<Vec<f64>>,
}

/// Response-probability quantiles per level: `values[i][j]` is level `levels[j]` at `x[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileGrid {
    pub levels: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

/// `(t, x, r)` triplets of the real data and of replicate datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcTriplets {
    pub real: Vec<(usize, f64, bool)>,
    pub replicates: Vec<Vec<(usize, f64, bool)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `(x, information)` pairs of the latest proposal.
    pub cost_curve: Option<Vec<(f64, f64)>>,
    /// Level grid shared by the function draws and contours.
    pub x: Vec<f64>,
    pub slices: Vec<Slice>,
    pub prior_draws: Vec<FunctionDraw>,
    pub posterior_draws: Vec<FunctionDraw>,
    pub prior_contours: QuantileGrid,
    pub ppc: PpcTriplets,
    pub seed: u64,
}

pub const CONTOUR_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];
const CONTOUR_SAMPLES: usize = 2000;

fn level_grid(d: &Design, n: usize) -> Vec<f64> {
    (0..n).map(|i| d.x_lo + (d.x_hi - d.x_lo) * i as f64 / (n - 1) as f64).collect()
}

fn function_draw(p: &Params, x: &[f64], d: &Design) -> FunctionDraw {
    FunctionDraw {
        params: ParamSummary { mu: p.mu, nu: p.nu, eta: p.eta, sigma: p.sigma(), lambda: p.lambda() },
        threshold: psi_inverse(midpoint_level(d), p, d).ok(),
        p: x.iter().map(|&xi| psi(xi, p, d)).collect(),
    }
}

/// `count` functions drawn by weight from `s`.
fn draw_functions(s: &SampleSet, x: &[f64], d: &Design, count: usize, seed: u64) -> Vec<FunctionDraw> {
    let mut r = psibayes_core::rng::from_seed(seed);
    (0..count).map(|_| function_draw(&s.samples()[s.draw_index(&mut r)], x, d)).collect()
}

fn slices(data: &Dataset, prior: &GaussianPrior, lp: &LaplacePosterior, n: usize) -> Vec<Slice> {
    let names = ["mu", "nu", "eta"];
    let mode = lp.mode.to_array();
    let sd = lp.sd();
    let axis = |k: usize| -> Vec<f64> { (0..n).map(|i| mode[k] + sd[k] * (-4.0 + 8.0 * i as f64 / (n - 1) as f64)).collect() };
    [(0, 1, 2), (0, 2, 1), (1, 2, 0)]
        .into_iter()
        .map(|(a, b, c)| {
            let (xa, xb) = (axis(a), axis(b));
            let mut logd = vec![vec![0.0; n]; n];
            let mut top = f64::NEG_INFINITY;
            for (i, &va) in xa.iter().enumerate() {
                for (j, &vb) in xb.iter().enumerate() {
                    let mut v = mode;
                    v[a] = va;
                    v[b] = vb;
                    let l = log_posterior_unnorm(data, prior, &Params::from_array(v));
                    logd[i][j] = l;
                    top = top.max(l);
                }
            }
            let density = logd.into_iter().map(|row| row.into_iter().map(|l| (l - top).exp()).collect()).collect();
            Slice { axes: [names[a].into(), names[b].into()], fixed: (names[c].into(), mode[c]), x: xa, y: xb, density }
        })
        .collect()
}

fn triplets(d: &Dataset) -> Vec<(usize, f64, bool)> {
    d.trials().iter().map(|t| (t.index, t.x, t.response)).collect()
}

/// Diagnostic exports for a session. Does not change the session.
pub fn diagnostics(st: &SessionState, opts: &DiagnosticsOptions) -> SessionResult<Diagnostics> {
    if opts.grid_points < 2 || opts.slice_points < 2 {
        return Err(SessionError::Invalid("grid_points and slice_points must be at least 2".into()));
    }
    let d = &st.config.design;
    let seed = opts.seed.unwrap_or_else(|| default_report_seed(st, 2));
    let sub = |k: u64| psibayes_core::rng::derive_seed(seed, k);
    let x = level_grid(d, opts.grid_points);

    let prior_lp = LaplacePosterior::from_prior(&st.config.prior);
    let prior_s = sample_laplace(&prior_lp, CONTOUR_SAMPLES, sub(0))?;
    let post_s = posterior_draws(st, CONTOUR_SAMPLES, sub(1))?;

    let ppc = if st.trials.is_empty() || opts.ppc_replicates == 0 {
        PpcTriplets { real: Vec::new(), replicates: Vec::new() }
    } else {
        let xs: Vec<f64> = st.trials.trials().iter().map(|t| t.x).collect();
        let reps = posterior_predictive_simulate(&post_s, &xs, d, opts.ppc_replicates, sub(2))?;
        PpcTriplets { real: triplets(&st.trials), replicates: reps.iter().map(triplets).collect() }
    };

    Ok(Diagnostics {
        cost_curve: st.last_curve.as_ref().map(|c| c.levels.iter().copied().zip(c.values.iter().copied()).collect()),
        slices: slices(&st.trials, &st.config.prior, &st.cached_posterior, opts.slice_points),
        prior_draws: draw_functions(&prior_s, &x, d, opts.draws, sub(3)),
        posterior_draws: draw_functions(&post_s, &x, d, opts.draws, sub(4)),
        prior_contours: QuantileGrid {
            levels: CONTOUR_LEVELS.to_vec(),
            values: posterior_response_quantiles(&prior_s, &x, &CONTOUR_LEVELS, d)?,
        },
        x,
        ppc,
        seed,
    })
}

/// The six prior hyperparameters as entered by an experimenter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorHyper {
    pub m_mu: f64,
    pub s_mu: f64,
    pub m_nu: f64,
    pub s_nu: f64,
    pub m_eta: f64,
    pub s_eta: f64,
}

impl PriorHyper {
    pub fn to_prior(&self) -> SessionResult<GaussianPrior> {
        Ok(GaussianPrior::new([self.m_mu, self.m_nu, self.m_eta], [self.s_mu, self.s_nu, self.s_eta])?)
    }
}

fn default_draws() -> usize {
    30
}

fn default_grid_points() -> usize {
    61
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewRequest {
    pub design: Design,
    pub hyper: PriorHyper,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorPreview {
    pub x: Vec<f64>,
    pub draws: Vec<FunctionDraw>,
    pub contours: QuantileGrid,
    /// Standard deviation of the midpoint thresholds of the draws.
    pub threshold_spread: f64,
    pub seed: u64,
}

/// Prior function draws and response-probability contours; no session needed.
pub fn prior_preview(req: &PreviewRequest) -> SessionResult<PriorPreview> {
    let d = Design::new(req.design.task, req.design.x_lo, req.design.x_hi)?;
    if req.draws == 0 || req.grid_points < 2 {
        return Err(SessionError::Invalid("draws >= 1 and grid_points >= 2 required".into()));
    }
    let prior = req.hyper.to_prior()?;
    let x = level_grid(&d, req.grid_points);
    let lp = LaplacePosterior::from_prior(&prior);
    let sub = |k: u64| psibayes_core::rng::derive_seed(req.seed, k);
    let draws: Vec<FunctionDraw> =
        sample_laplace(&lp, req.draws, sub(0))?.samples().iter().map(|p| function_draw(p, &x, &d)).collect();
    let contour_s = sample_laplace(&lp, CONTOUR_SAMPLES, sub(2))?;
    let th: Vec<f64> = draws.iter().filter_map(|f| f.threshold).collect();
    let spread = if th.len() < 2 {
        0.0
    } else {
        let m = th.iter().sum::<f64>() / th.len() as f64;
        (th.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (th.len() - 1) as f64).sqrt()
    };
    Ok(PriorPreview {
        contours: QuantileGrid {
            levels: CONTOUR_LEVELS.to_vec(),
            values: posterior_response_quantiles(&contour_s, &x, &CONTOUR_LEVELS, &d)?,
        },
        x,
        draws,
        threshold_spread: spread,
        seed: req.seed,
    })
}
