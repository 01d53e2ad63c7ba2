#![allow(dead_code)]

use psibayes_core::bayes::GaussianPrior;
use psibayes_core::placement::{PlacementPolicy, StoppingRule};
use psibayes_core::psychometric::{logit, Design};
use psibayes_session::{SessionConfig, SessionState};

pub fn design() -> Design {
    Design::two_afc(-5.0, 12.0).unwrap()
}

pub fn prior() -> GaussianPrior {
    GaussianPrior::new([3.0, 0.0, logit(0.02)], [0.5f64.sqrt(), 0.5f64.sqrt(), 0.3]).unwrap()
}

/// Small sample count keeps proposals fast.
pub fn config(seed: u64, max_trials: usize) -> SessionConfig {
    let d = design();
    SessionConfig {
        design: d,
        prior: prior(),
        policy: PlacementPolicy::psi(&d).with_sample_count(300),
        stopping_rule: StoppingRule::FixedTrials { count: max_trials },
        seed,
    }
}

pub fn session(seed: u64, max_trials: usize) -> SessionState {
    SessionState::create(config(seed, max_trials)).unwrap()
}
