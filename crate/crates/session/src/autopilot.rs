//! Runs a session against a simulated observer.

use serde::{Deserialize, Serialize};

use psibayes_core::psychometric::Params;
use psibayes_core::rng;
use psibayes_sim::SimulatedObserver;

use crate::error::{SessionError, SessionResult};
use crate::state::{SessionState, StopReason};

/// Simulated Gaussian observer in natural parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObserverSpec {
    pub mu: f64,
    pub sigma: f64,
    pub lambda: f64,
    /// Change of `mu` per trial; the threshold falls when this is positive.
    #[serde(default)]
    pub drift_per_trial: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AutopilotRequest {
    pub observer: ObserverSpec,
    /// Upper bound on trials run by this call.
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AutopilotOutcome {
    pub trials_run: usize,
    pub total_trials: usize,
    pub stopped: Option<StopReason>,
}

/// Alternates `next` and `respond` until `trials` trials ran or the session stopped.
/// A stimulus left pending by an earlier caller is answered first.
pub fn autopilot(st: &mut SessionState, req: &AutopilotRequest) -> SessionResult<AutopilotOutcome> {
    let o = req.observer;
    let p = Params::from_natural(o.mu, o.sigma, o.lambda)?;
    let design = st.config.design;
    let obs = if o.drift_per_trial == 0.0 {
        SimulatedObserver::gaussian(p, design)
    } else {
        SimulatedObserver::drifting(p, o.drift_per_trial, design)
    };
    let mut r = rng::from_seed(req.seed);
    let mut run = 0;
    while run < req.trials && st.stopped.is_none() {
        let x = match st.pending_stimulus {
            Some(x) => x,
            None => st.next()?.x,
        };
        let t = st.trial_count() + 1;
        let resp = obs.respond(x, t, &mut r).map_err(|e| SessionError::Invalid(e.to_string()))?;
        st.respond(resp)?;
        run += 1;
    }
    Ok(AutopilotOutcome { trials_run: run, total_trials: st.trial_count(), stopped: st.stopped })
}
