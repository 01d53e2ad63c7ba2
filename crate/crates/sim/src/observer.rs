use rand::Rng;
use serde::{Deserialize, Serialize};

use psibayes_core::psychometric::{psi, psi_weibull, Design, Params, WeibullParams};
use psibayes_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObserverKind {
    Gaussian { params: Params },
    Weibull { params: WeibullParams },
    /// `mu(t) = mu_0 - drift_per_trial * (t - 1)` for trial `t >= 1`.
    DriftingGaussian { initial: Params, drift_per_trial: f64 },
}

/// A synthetic observer answering trials of a design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulatedObserver {
    pub kind: ObserverKind,
    pub design: Design,
}

impl SimulatedObserver {
    pub fn gaussian(params: Params, design: Design) -> Self {
        Self { kind: ObserverKind::Gaussian { params }, design }
    }

    pub fn weibull(params: WeibullParams, design: Design) -> Self {
        Self { kind: ObserverKind::Weibull { params }, design }
    }

    pub fn drifting(initial: Params, drift_per_trial: f64, design: Design) -> Self {
        Self { kind: ObserverKind::DriftingGaussian { initial, drift_per_trial }, design }
    }

    /// Gaussian parameters in force at trial `t` (1-based); `None` for a Weibull observer.
    pub fn params_at(&self, t: usize) -> Option<Params> {
        match self.kind {
            ObserverKind::Gaussian { params } => Some(params),
            ObserverKind::DriftingGaussian { initial, drift_per_trial } => Some(Params {
                mu: initial.mu - drift_per_trial * (t.max(1) - 1) as f64,
                ..initial
            }),
            ObserverKind::Weibull { .. } => None,
        }
    }

    /// Probability of a correct (positive) response at `x` on trial `t`.
    pub fn probability(&self, x: f64, t: usize) -> Result<f64> {
        if !self.design.contains(x) {
            return Err(Error::Domain(format!(
                "stimulus {x} outside [{}, {}]",
                self.design.x_lo, self.design.x_hi
            )));
        }
        match self.kind {
            ObserverKind::Weibull { params } => psi_weibull(x, &params, self.design.gamma()),
            _ => Ok(psi(x, &self.params_at(t).expect("gaussian observer"), &self.design)),
        }
    }

    /// One Bernoulli response; consumes exactly one uniform draw.
    pub fn respond<R: Rng + ?Sized>(&self, x: f64, t: usize, rng: &mut R) -> Result<bool> {
        let p = self.probability(x, t)?;
        Ok(rng.random::<f64>() < p)
    }
}
