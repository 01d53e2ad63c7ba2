use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use psibayes_core::bayes::{
    laplace_fit, sample_laplace, Dataset, GaussianPrior, LaplacePosterior, SampleSet, TrialRecord,
};
use psibayes_core::placement::{
    select_next, should_stop, CostCurve, PlacementPolicy, PolicyKind, Selection, SelectionWarning, StoppingRule,
};
use psibayes_core::psychometric::{Design, Functional};
use psibayes_core::rng;

use crate::error::{SessionError, SessionResult};

/// Everything fixed when a session is created.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionConfig {
    pub design: Design,
    pub prior: GaussianPrior,
    pub policy: PlacementPolicy,
    pub stopping_rule: StoppingRule,
    pub seed: u64,
}

impl SessionConfig {
    pub fn validate(&self) -> SessionResult<()> {
        let d = &self.design;
        Design::new(d.task, d.x_lo, d.x_hi)?;
        GaussianPrior::new(self.prior.mean, self.prior.sd)?;
        self.policy.validate(d)?;
        self.stopping_rule.validate()?;
        let custom = |f: &Functional| matches!(f, Functional::Custom(_));
        let custom_policy = matches!(&self.policy.kind, PolicyKind::T { functional, .. } if custom(functional));
        let custom_rule = matches!(&self.stopping_rule, StoppingRule::ProbabilityWithin { functional, .. } if custom(functional));
        if custom_policy || custom_rule {
            return Err(SessionError::Invalid("sessions cannot persist custom functionals".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    RuleSatisfied,
    Manual,
}

/// Short estimate summary kept in the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub trials: usize,
    pub mean: [f64; 3],
    pub entropy: f64,
}

/// Append-only log entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Created { config: Box<SessionConfigRecord> },
    Proposed { x: f64, cost_curve_digest: String },
    Responded { x: f64, response: bool },
    Estimated { summary: EstimateSummary },
    Stopped { reason: StopReason },
}

/// JSON snapshot of a [`SessionConfig`]; kept as a value so events compare by content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionConfigRecord(pub serde_json::Value);

impl SessionConfigRecord {
    fn new(c: &SessionConfig) -> Self {
        Self(serde_json::to_value(c).expect("config serializes"))
    }

    pub fn config(&self) -> SessionResult<SessionConfig> {
        serde_json::from_value(self.0.clone()).map_err(|e| SessionError::CorruptFile(e.to_string()))
    }
}

/// Live session. Field order is the canonical order of the saved file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub config: SessionConfig,
    pub trials: Dataset,
    /// Laplace fit to all trials from the original prior.
    pub cached_posterior: LaplacePosterior,
    pub pending_stimulus: Option<f64>,
    /// Number of random streams consumed; stream `k` is seeded with `derive_seed(seed, k)`.
    pub draw_counter: u64,
    pub stopped: Option<StopReason>,
    pub last_curve: Option<CostCurve>,
    pub events: Vec<SessionEvent>,
    pub created_at_ms: u64,
    pub updated_at_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NextOutcome {
    /// 1-based number of the trial the stimulus is for.
    pub trial: usize,
    pub x: f64,
    pub curve: CostCurve,
    pub warning: Option<SelectionWarning>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RespondOutcome {
    pub trial: TrialRecord,
    pub posterior: LaplacePosterior,
    pub stopped: Option<StopReason>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Digest recorded for a proposal set by [`SessionState::propose_at`].
pub const MANUAL_PROPOSAL: &str = "manual";

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl SessionState {
    /// New session with no trials; the cached posterior is the prior itself.
    pub fn create(config: SessionConfig) -> SessionResult<Self> {
        Self::create_with_id(uuid::Uuid::new_v4().to_string(), config)
    }

    pub fn create_with_id(id: String, config: SessionConfig) -> SessionResult<Self> {
        config.validate()?;
        let t = now_ms();
        Ok(Self {
            id,
            trials: Dataset::new(config.design),
            cached_posterior: LaplacePosterior::from_prior(&config.prior),
            pending_stimulus: None,
            draw_counter: 0,
            stopped: None,
            last_curve: None,
            events: vec![SessionEvent::Created { config: Box::new(SessionConfigRecord::new(&config)) }],
            config,
            created_at_ms: t,
            updated_at_ms: t,
        })
    }

    pub fn trial_count(&self) -> usize {
        self.trials.len()
    }

    fn next_seed(&mut self) -> u64 {
        let s = rng::derive_seed(self.config.seed, self.draw_counter);
        self.draw_counter += 1;
        s
    }

    /// Proposes the next stimulus from the cached posterior.
    pub fn next(&mut self) -> SessionResult<NextOutcome> {
        if self.stopped.is_some() {
            return Err(SessionError::SessionStopped);
        }
        if self.pending_stimulus.is_some() {
            return Err(SessionError::AlreadyPending);
        }
        let seed = rng::derive_seed(self.config.seed, self.draw_counter);
        let Selection { x, curve, warning } = select_next(&self.config.policy, &self.cached_posterior, &self.config.design, seed)?;
        self.draw_counter += 1;
        let digest = sha256_hex(&serde_json::to_vec(&curve).expect("curve serializes"));
        self.pending_stimulus = Some(x);
        self.last_curve = Some(curve.clone());
        self.events.push(SessionEvent::Proposed { x, cost_curve_digest: digest });
        self.updated_at_ms = now_ms();
        Ok(NextOutcome { trial: self.trial_count() + 1, x, curve, warning })
    }

    /// Sets the pending stimulus to a level chosen by the experimenter. No
    /// random stream is consumed; the log marks the proposal as manual.
    pub fn propose_at(&mut self, x: f64) -> SessionResult<()> {
        if self.stopped.is_some() {
            return Err(SessionError::SessionStopped);
        }
        if self.pending_stimulus.is_some() {
            return Err(SessionError::AlreadyPending);
        }
        let d = &self.config.design;
        if !(x >= d.x_lo && x <= d.x_hi) {
            return Err(SessionError::Invalid(format!("level {x} outside [{}, {}]", d.x_lo, d.x_hi)));
        }
        self.pending_stimulus = Some(x);
        self.events.push(SessionEvent::Proposed { x, cost_curve_digest: MANUAL_PROPOSAL.into() });
        self.updated_at_ms = now_ms();
        Ok(())
    }

    /// Records the response to the pending stimulus and refits the posterior.
    ///
    /// The state is left untouched if the refit fails.
    pub fn respond(&mut self, response: bool) -> SessionResult<RespondOutcome> {
        let x = self.pending_stimulus.ok_or(SessionError::NoPendingStimulus)?;
        let mut trials = self.trials.clone();
        let record = *trials.push(x, response)?;
        let lp = laplace_fit(&trials, &self.config.prior)?;
        self.trials = trials;
        self.cached_posterior = lp;
        self.pending_stimulus = None;
        self.events.push(SessionEvent::Responded { x, response });
        self.updated_at_ms = now_ms();

        let stop = match &self.config.stopping_rule {
            StoppingRule::ProbabilityWithin { .. } => {
                let seed = self.next_seed();
                let s = sample_laplace(&self.cached_posterior, self.config.policy.sample_count, seed)?;
                should_stop(&self.config.stopping_rule, &self.cached_posterior, &s, self.trial_count(), &self.config.design)
            }
            rule => {
                // these rules ignore the samples
                let s = SampleSet::uniform(vec![self.cached_posterior.mode])?;
                should_stop(rule, &self.cached_posterior, &s, self.trial_count(), &self.config.design)
            }
        };
        if stop {
            self.mark_stopped(StopReason::RuleSatisfied);
        }
        Ok(RespondOutcome { trial: record, posterior: self.cached_posterior, stopped: self.stopped })
    }

    fn mark_stopped(&mut self, reason: StopReason) {
        self.stopped = Some(reason);
        self.pending_stimulus = None;
        self.events.push(SessionEvent::Stopped { reason });
        self.updated_at_ms = now_ms();
    }

    /// Ends the session at the experimenter's request.
    pub fn stop(&mut self) -> SessionResult<()> {
        if self.stopped.is_some() {
            return Err(SessionError::SessionStopped);
        }
        self.mark_stopped(StopReason::Manual);
        Ok(())
    }

    pub fn record_estimate(&mut self, summary: EstimateSummary) {
        self.events.push(SessionEvent::Estimated { summary });
        self.updated_at_ms = now_ms();
    }

    /// SHA-256 of the logical state: everything except the id and timestamps.
    pub fn digest(&self) -> String {
        #[derive(Serialize)]
        struct View<'a> {
            config: &'a SessionConfig,
            trials: &'a Dataset,
            cached_posterior: &'a LaplacePosterior,
            pending_stimulus: Option<f64>,
            draw_counter: u64,
            stopped: Option<StopReason>,
            last_curve: &'a Option<CostCurve>,
            events: &'a [SessionEvent],
        }
        let v = View {
            config: &self.config,
            trials: &self.trials,
            cached_posterior: &self.cached_posterior,
            pending_stimulus: self.pending_stimulus,
            draw_counter: self.draw_counter,
            stopped: self.stopped,
            last_curve: &self.last_curve,
            events: &self.events,
        };
        sha256_hex(&serde_json::to_vec(&v).expect("state serializes"))
    }

    /// Rebuilds a session by re-executing its event log.
    ///
    /// Proposals are recomputed and must land on the logged level; any
    /// divergence is reported rather than papered over.
    pub fn replay(id: &str, events: &[SessionEvent]) -> SessionResult<Self> {
        let Some(SessionEvent::Created { config }) = events.first() else {
            return Err(SessionError::ReplayMismatch("log must start with a created event".into()));
        };
        let mut st = Self::create_with_id(id.to_string(), config.config()?)?;
        for (i, ev) in events.iter().enumerate().skip(1) {
            match ev {
                SessionEvent::Created { .. } => {
                    return Err(SessionError::ReplayMismatch(format!("second created event at {i}")));
                }
                SessionEvent::Proposed { x, cost_curve_digest } if cost_curve_digest == MANUAL_PROPOSAL => st.propose_at(*x)?,
                SessionEvent::Proposed { x, cost_curve_digest } => {
                    st.next()?;
                    let Some(SessionEvent::Proposed { x: rx, cost_curve_digest: rd }) = st.events.last() else {
                        unreachable!("next appends a proposal")
                    };
                    if rx != x || rd != cost_curve_digest {
                        return Err(SessionError::ReplayMismatch(format!("event {i}: proposal {rx} differs from logged {x}")));
                    }
                }
                SessionEvent::Responded { x, response } => {
                    if st.pending_stimulus != Some(*x) {
                        return Err(SessionError::ReplayMismatch(format!("event {i}: response at {x} without that proposal")));
                    }
                    st.respond(*response)?;
                }
                SessionEvent::Estimated { summary } => st.record_estimate(summary.clone()),
                SessionEvent::Stopped { reason } => match (reason, st.stopped) {
                    // a rule stop is appended by the preceding response
                    (StopReason::RuleSatisfied, Some(StopReason::RuleSatisfied)) => {}
                    (StopReason::Manual, None) => st.stop()?,
                    _ => return Err(SessionError::ReplayMismatch(format!("event {i}: unexpected stop"))),
                },
            }
        }
        if st.events.len() != events.len() {
            return Err(SessionError::ReplayMismatch(format!(
                "replayed {} events from a log of {}",
                st.events.len(),
                events.len()
            )));
        }
        Ok(st)
    }
}
