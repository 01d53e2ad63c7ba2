//! Psychometric function families and the functionals defined on them.
//!
//! Parameters live in an unconstrained space `(mu, nu, eta)` with
//! `sigma = exp(nu)` and `lambda = logistic(eta)`. The forced-choice
//! function is
//!
//! `psi(x) = (1 - lambda) * (gamma + (1 - gamma) * Phi((x - mu) / sigma)) + lambda * gamma`
//!
//! and the yes/no variant replaces the guessing floor by a symmetric lapse:
//! `psi(x) = (1 - lambda) * Phi((x - mu) / sigma) + lambda / 2`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

/// Numerically stable logistic function.
#[inline]
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// A point in unconstrained parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Location, in stimulus units.
    pub mu: f64,
    /// `ln(sigma)`.
    pub nu: f64,
    /// `logit(lambda)`.
    pub eta: f64,
}

impl Params {
    pub fn new(mu: f64, nu: f64, eta: f64) -> Result<Self> {
        if !(mu.is_finite() && nu.is_finite() && eta.is_finite()) {
            return Err(Error::Domain(format!(
                "parameters must be finite, got ({mu}, {nu}, {eta})"
            )));
        }
        Ok(Self { mu, nu, eta })
    }

    /// Builds parameters from `(mu, sigma, lambda)`.
    pub fn from_natural(mu: f64, sigma: f64, lambda: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
        }
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::Domain(format!("lambda must lie in (0, 1), got {lambda}")));
        }
        Self::new(mu, sigma.ln(), logit(lambda))
    }

    /// Returns `(mu, sigma, lambda)`.
    pub fn to_natural(&self) -> (f64, f64, f64) {
        (self.mu, self.sigma(), self.lambda())
    }

    #[inline]
    pub fn sigma(&self) -> f64 {
        self.nu.exp()
    }

    #[inline]
    pub fn lambda(&self) -> f64 {
        logistic(self.eta)
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.mu, self.nu, self.eta]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self { mu: v[0], nu: v[1], eta: v[2] }
    }
}

/// The response task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    /// N-alternative forced choice with chance rate `gamma` (0.5 for 2AFC).
    ForcedChoice { gamma: f64 },
    YesNo,
}

/// Experimental design: the task and the admissible stimulus interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub task: Task,
    pub x_lo: f64,
    pub x_hi: f64,
}

impl Design {
    pub fn new(task: Task, x_lo: f64, x_hi: f64) -> Result<Self> {
        if let Task::ForcedChoice { gamma } = task {
            if !(gamma > 0.0 && gamma < 1.0) {
                return Err(Error::Domain(format!("chance rate must lie in (0, 1), got {gamma}")));
            }
        }
        if !(x_lo.is_finite() && x_hi.is_finite() && x_lo < x_hi) {
            return Err(Error::Domain(format!(
                "stimulus domain needs x_lo < x_hi, got [{x_lo}, {x_hi}]"
            )));
        }
        Ok(Self { task, x_lo, x_hi })
    }

    /// Two-alternative forced choice over `[x_lo, x_hi]`.
    pub fn two_afc(x_lo: f64, x_hi: f64) -> Result<Self> {
        Self::new(Task::ForcedChoice { gamma: 0.5 }, x_lo, x_hi)
    }

    pub fn yes_no(x_lo: f64, x_hi: f64) -> Result<Self> {
        Self::new(Task::YesNo, x_lo, x_hi)
    }

    /// Chance rate; zero for yes/no.
    pub fn gamma(&self) -> f64 {
        match self.task {
            Task::ForcedChoice { gamma } => gamma,
            Task::YesNo => 0.0,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_lo && x <= self.x_hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.x_lo + self.x_hi)
    }

    /// Open interval of response probabilities reachable with lapse `lambda`.
    pub fn attainable_range(&self, lambda: f64) -> (f64, f64) {
        match self.task {
            Task::ForcedChoice { gamma } => (gamma, (1.0 - lambda) + lambda * gamma),
            Task::YesNo => (0.5 * lambda, 1.0 - 0.5 * lambda),
        }
    }
}

/// Weibull psychometric function parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
}

impl WeibullParams {
    pub fn new(alpha: f64, beta: f64, lambda: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!(
                "Weibull scale and shape must be positive, got alpha={alpha}, beta={beta}"
            )));
        }
        if !(0.0..1.0).contains(&lambda) {
            return Err(Error::Domain(format!("lapse must lie in [0, 1), got {lambda}")));
        }
        Ok(Self { alpha, beta, lambda })
    }
}

/// Response probability and its gradient with respect to `(mu, nu, eta)`.
#[derive(Debug, Clone, Copy)]
pub struct PsiEval {
    pub p: f64,
    /// `1 - p`, computed from the upper tail to keep precision near the ceiling.
    pub q: f64,
    pub grad: [f64; 3],
}

/// Response probability at stimulus `x`.
#[inline]
pub fn psi(x: f64, p: &Params, d: &Design) -> f64 {
    let z = (x - p.mu) / p.sigma();
    let lambda = p.lambda();
    match d.task {
        Task::ForcedChoice { gamma } => gamma + (1.0 - gamma) * (1.0 - lambda) * normal::cdf(z),
        Task::YesNo => 0.5 * lambda + (1.0 - lambda) * normal::cdf(z),
    }
}

/// Evaluates `psi`, `1 - psi` and the parameter gradient in one pass.
pub fn psi_with_gradient(x: f64, p: &Params, d: &Design) -> PsiEval {
    let sigma = p.sigma();
    let z = (x - p.mu) / sigma;
    let lambda = p.lambda();
    let one_m_lambda = logistic(-p.eta);
    let cdf = normal::cdf(z);
    let sf = normal::sf(z);
    let dens = normal::pdf(z);
    let dlambda_deta = lambda * one_m_lambda;

    let (pr, q, scale, dpsi_dlambda) = match d.task {
        Task::ForcedChoice { gamma } => (
            gamma + (1.0 - gamma) * one_m_lambda * cdf,
            (1.0 - gamma) * (sf + lambda * cdf),
            (1.0 - gamma) * one_m_lambda,
            -(1.0 - gamma) * cdf,
        ),
        Task::YesNo => (
            0.5 * lambda + one_m_lambda * cdf,
            0.5 * lambda + one_m_lambda * sf,
            one_m_lambda,
            0.5 - cdf,
        ),
    };
    PsiEval {
        p: pr,
        q,
        grad: [
            -scale * dens / sigma,
            -scale * dens * z,
            dpsi_dlambda * dlambda_deta,
        ],
    }
}

/// Weibull psychometric function `(1-l)(g + (1-g) w(x)) + l g` with
/// `w(x) = 1 - exp(-(x/alpha)^beta)`.
pub fn psi_weibull(x: f64, w: &WeibullParams, gamma: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("Weibull stimulus must be non-negative, got {x}")));
    }
    let wx = -(-(x / w.alpha).powf(w.beta)).exp_m1();
    Ok((1.0 - w.lambda) * (gamma + (1.0 - gamma) * wx) + w.lambda * gamma)
}

/// Stimulus level at which the response probability equals `prob`.
pub fn psi_inverse(prob: f64, par: &Params, d: &Design) -> Result<f64> {
    let lambda = par.lambda();
    let (lo, hi) = d.attainable_range(lambda);
    if !(prob > lo && prob < hi) {
        return Err(Error::OutOfRange { p: prob, lo, hi });
    }
    let one_m_lambda = logistic(-par.eta);
    // Both tails of Phi, each computed directly from the distance to its end of the range.
    let (cdf, sf) = match d.task {
        Task::ForcedChoice { gamma } => {
            let span = (1.0 - gamma) * one_m_lambda;
            ((prob - gamma) / span, (hi - prob) / span)
        }
        Task::YesNo => {
            let span = one_m_lambda;
            ((prob - lo) / span, (hi - prob) / span)
        }
    };
    let z = if cdf <= 0.5 {
        normal::quantile(cdf)
    } else {
        normal::upper_quantile(sf)
    };
    Ok(par.mu + par.sigma() * z)
}

/// A user-supplied scalar functional of the parameters.
#[derive(Clone)]
pub struct CustomFunctional {
    pub name: String,
    func: Arc<dyn Fn(&Params) -> f64 + Send + Sync>,
}

impl CustomFunctional {
    pub fn new(name: impl Into<String>, func: impl Fn(&Params) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), func: Arc::new(func) }
    }

    pub fn eval(&self, p: &Params) -> f64 {
        (self.func)(p)
    }
}

impl fmt::Debug for CustomFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomFunctional").field("name", &self.name).finish()
    }
}

/// Scalar quantity of interest derived from the parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "level", rename_all = "snake_case")]
pub enum Functional {
    /// Stimulus level at which `psi` equals the given probability.
    Threshold(f64),
    /// Distance between two thresholds set by a probability margin.
    Width(f64),
    /// `-ln(sigma)`.
    Slope,
    /// Not serializable; sessions only persist the built-in kinds.
    #[serde(skip)]
    Custom(CustomFunctional),
}

impl Functional {
    /// Checks the functional's own parameter against the design.
    pub fn validate(&self, d: &Design) -> Result<()> {
        match *self {
            Functional::Threshold(level) => {
                let (lo, hi) = d.attainable_range(0.0);
                if !(level > lo && level < hi) {
                    return Err(Error::Domain(format!(
                        "threshold level {level} outside the range ({lo}, {hi}) of psi"
                    )));
                }
            }
            Functional::Width(margin) => {
                if !(margin > 0.0 && margin < 0.5) {
                    return Err(Error::Domain(format!("width margin must lie in (0, 0.5), got {margin}")));
                }
                if let Task::ForcedChoice { gamma } = d.task {
                    if gamma + margin >= 1.0 - margin {
                        return Err(Error::Domain(format!(
                            "width margin {margin} leaves no interval above chance {gamma}"
                        )));
                    }
                }
            }
            Functional::Slope | Functional::Custom(_) => {}
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self {
            Functional::Threshold(a) => format!("threshold({a})"),
            Functional::Width(a) => format!("width({a})"),
            Functional::Slope => "slope".to_string(),
            Functional::Custom(c) => c.name.clone(),
        }
    }
}

/// Evaluates a functional at a parameter point.
pub fn evaluate_functional(f: &Functional, par: &Params, d: &Design) -> Result<f64> {
    match f {
        Functional::Threshold(level) => psi_inverse(*level, par, d),
        Functional::Width(margin) => {
            let upper = psi_inverse(1.0 - margin, par, d)?;
            let lower = match d.task {
                Task::YesNo => psi_inverse(*margin, par, d)?,
                Task::ForcedChoice { gamma } => psi_inverse(gamma + margin, par, d)?,
            };
            Ok(upper - lower)
        }
        Functional::Slope => Ok(-par.nu),
        Functional::Custom(c) => {
            let v = c.eval(par);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Domain(format!("custom functional '{}' returned {v}", c.name)))
            }
        }
    }
}
