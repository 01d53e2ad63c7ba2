//! Versioned JSON session files.
//!
//! Layout: `{"schema_version": 1, "session": {...}}` with the session fields
//! in declaration order. Older or newer versions are rejected, never coerced.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{SessionError, SessionResult};
use crate::state::SessionState;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct FileRef<'a> {
    schema_version: u32,
    session: &'a SessionState,
}

pub fn to_json(st: &SessionState) -> String {
    serde_json::to_string_pretty(&FileRef { schema_version: SCHEMA_VERSION, session: st }).expect("session serializes")
}

pub fn from_json(text: &str) -> SessionResult<SessionState> {
    let mut v: serde_json::Value = serde_json::from_str(text).map_err(|e| SessionError::CorruptFile(e.to_string()))?;
    let found = v
        .get("schema_version")
        .and_then(|s| s.as_u64())
        .ok_or_else(|| SessionError::CorruptFile("missing schema_version".into()))?;
    if found != SCHEMA_VERSION as u64 {
        return Err(SessionError::SchemaVersionMismatch { found: found as u32, expected: SCHEMA_VERSION });
    }
    let session = v.get_mut("session").map(serde_json::Value::take).ok_or_else(|| SessionError::CorruptFile("missing session".into()))?;
    let st: SessionState = serde_json::from_value(session).map_err(|e| SessionError::CorruptFile(e.to_string()))?;
    st.config.validate().map_err(|e| SessionError::CorruptFile(format!("invalid configuration: {e}")))?;
    if st.trials.design != st.config.design {
        return Err(SessionError::CorruptFile("trial log design differs from session design".into()));
    }
    st.trials.validate().map_err(|e| SessionError::CorruptFile(e.to_string()))?;
    Ok(st)
}

/// Writes through a temporary file in the same directory, then renames.
pub fn save(st: &SessionState, path: &Path) -> SessionResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| SessionError::Invalid(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, to_json(st))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> SessionResult<SessionState> {
    from_json(&fs::read_to_string(path)?)
}
