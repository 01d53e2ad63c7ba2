//! Adaptive testing sessions: propose a stimulus, record the response,
//! refit the posterior, report estimates. Sessions are event-sourced,
//! persist as versioned JSON, and are served over a JSON HTTP API.

pub mod autopilot;
pub mod diagnostics;
pub mod error;
pub mod estimate;
pub mod http;
pub mod persist;
pub mod state;

pub use autopilot::{autopilot, AutopilotOutcome, AutopilotRequest, ObserverSpec};
pub use diagnostics::{diagnostics, prior_preview, Diagnostics, PreviewRequest, PriorPreview};
pub use error::{SessionError, SessionResult};
pub use estimate::{EstimateOptions, EstimateReport};
pub use persist::{load, save, SCHEMA_VERSION};
pub use state::{NextOutcome, RespondOutcome, SessionConfig, SessionEvent, SessionState, StopReason, MANUAL_PROPOSAL};
