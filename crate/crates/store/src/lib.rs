//! Append-only persistence for trainees, exercise attempts and biopsy
//! sessions.
//!
//! The [`NdjsonStore`] keeps one log per collection under a data
//! directory:
//!
//! ```text
//! <data-dir>/users.ndjson
//! <data-dir>/attempts.ndjson
//! <data-dir>/sessions.ndjson
//! ```
//!
//! Each line is `{"crc32":"<8 hex digits>","record":<record JSON>}` where the
//! checksum covers the exact bytes of `record`. Records are never rewritten.

mod log;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use biopsym_core::exercises::{Attempt, ExerciseKind};
use biopsym_core::{Protocol, Sample};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log::RecordLog;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown user {0}")]
    UnknownUser(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("{path}: line {line} is corrupt: {msg}")]
    Corrupt { path: PathBuf, line: usize, msg: String },
    #[error("session {0} ends before it starts")]
    InvalidSession(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

/// Random 128-bit id as 32 lowercase hex digits.
pub fn new_id() -> String {
    format!("{:032x}", rand::random::<u128>())
}

/// Milliseconds since the Unix epoch, UTC.
pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub display_name: String,
    pub created_at_ms: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssistanceUsage {
    pub coronal: bool,
    pub three_d: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub user_id: String,
    pub scenario_ref: String,
    #[serde(default)]
    pub exercise_id: Option<String>,
    pub started_at_ms: u64,
    pub ended_at_ms: Option<u64>,
    pub samples: Vec<Sample>,
    pub result: Protocol,
    /// Exercise grade when the session was run as a graded exercise.
    #[serde(default)]
    pub score: Option<f64>,
    pub assistance: AssistanceUsage,
}

/// What a timeline entry refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityKind {
    Questionnaire,
    VolumeEstimate,
    StructureLocalization,
    GuidedSimulation,
    /// A biopsy session, graded or not.
    Simulation,
}

impl From<ExerciseKind> for ActivityKind {
    fn from(k: ExerciseKind) -> Self {
        match k {
            ExerciseKind::Questionnaire => ActivityKind::Questionnaire,
            ExerciseKind::VolumeEstimate => ActivityKind::VolumeEstimate,
            ExerciseKind::StructureLocalization => ActivityKind::StructureLocalization,
            ExerciseKind::GuidedSimulation => ActivityKind::GuidedSimulation,
        }
    }
}

impl std::str::FromStr for ActivityKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| format!("unknown activity kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub timestamp_ms: u64,
    pub kind: ActivityKind,
    pub ref_id: String,
    /// Sessions run outside an exercise carry coverage here.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub timestamp_ms: u64,
    pub score: f64,
}

/// Storage backend. Writes take `&mut self`; callers serialize them.
pub trait SessionStore {
    fn add_user(&mut self, user: UserProfile) -> Result<()>;
    fn user(&self, user_id: &str) -> Option<&UserProfile>;
    fn users(&self) -> &[UserProfile];

    fn record_attempt(&mut self, attempt: Attempt) -> Result<String>;
    fn record_session(&mut self, session: SessionRecord) -> Result<String>;

    /// All attempts in insertion order.
    fn attempts(&self) -> &[Attempt];
    /// All sessions in insertion order.
    fn sessions(&self) -> &[SessionRecord];

    fn create_user(&mut self, display_name: &str) -> Result<UserProfile> {
        let user = UserProfile {
            user_id: new_id(),
            display_name: display_name.to_string(),
            created_at_ms: now_ms(),
        };
        self.add_user(user.clone())?;
        Ok(user)
    }

    fn attempts_of(&self, user_id: &str) -> Result<Vec<&Attempt>> {
        self.require_user(user_id)?;
        Ok(self.attempts().iter().filter(|a| a.user_id == user_id).collect())
    }

    fn require_user(&self, user_id: &str) -> Result<()> {
        self.user(user_id)
            .map(|_| ())
            .ok_or_else(|| StoreError::UnknownUser(user_id.to_string()))
    }

    /// Everything the user has done, oldest first. Equal timestamps keep
    /// insertion order, attempts before sessions.
    fn timeline(&self, user_id: &str) -> Result<Vec<TimelineEntry>> {
        self.require_user(user_id)?;
        let mut out: Vec<TimelineEntry> = self
            .attempts()
            .iter()
            .filter(|a| a.user_id == user_id)
            .map(|a| TimelineEntry {
                timestamp_ms: a.timestamp_ms,
                kind: a.kind.into(),
                ref_id: a.attempt_id.clone(),
                score: a.score,
            })
            .chain(
                self.sessions()
                    .iter()
                    .filter(|s| s.user_id == user_id)
                    .map(|s| TimelineEntry {
                        timestamp_ms: s.started_at_ms,
                        kind: ActivityKind::Simulation,
                        ref_id: s.session_id.clone(),
                        score: s.score.unwrap_or(s.result.coverage),
                    }),
            )
            .collect();
        out.sort_by_key(|e| e.timestamp_ms);
        Ok(out)
    }

    fn score_series(&self, user_id: &str, kind: ActivityKind) -> Result<Vec<SeriesPoint>> {
        Ok(self
            .timeline(user_id)?
            .into_iter()
            .filter(|e| e.kind == kind)
            .map(|e| SeriesPoint {
                timestamp_ms: e.timestamp_ms,
                score: e.score,
            })
            .collect())
    }

    fn replay(&self, session_id: &str) -> Result<&SessionRecord> {
        self.sessions()
            .iter()
            .find(|s| s.session_id == session_id)
            .ok_or_else(|| StoreError::UnknownSession(session_id.to_string()))
    }
}

/// [`SessionStore`] over checksummed NDJSON logs, with an in-memory copy of
/// every collection for queries.
#[derive(Debug)]
pub struct NdjsonStore {
    dir: PathBuf,
    users: Vec<UserProfile>,
    attempts: Vec<Attempt>,
    sessions: Vec<SessionRecord>,
    user_log: RecordLog<UserProfile>,
    attempt_log: RecordLog<Attempt>,
    session_log: RecordLog<SessionRecord>,
}

impl NdjsonStore {
    /// Opens (creating if needed) the store in `dir`, dropping any torn
    /// final record.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        let (user_log, users) = RecordLog::open(dir.join("users.ndjson"))?;
        let (attempt_log, attempts) = RecordLog::open(dir.join("attempts.ndjson"))?;
        let (session_log, sessions) = RecordLog::open(dir.join("sessions.ndjson"))?;
        Ok(Self {
            dir,
            users,
            attempts,
            sessions,
            user_log,
            attempt_log,
            session_log,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Forces written records to stable storage.
    pub fn sync(&self) -> Result<()> {
        self.user_log.sync()?;
        self.attempt_log.sync()?;
        self.session_log.sync()
    }
}

impl SessionStore for NdjsonStore {
    fn add_user(&mut self, user: UserProfile) -> Result<()> {
        if self.user(&user.user_id).is_some() {
            return Err(StoreError::DuplicateId(user.user_id));
        }
        self.user_log.append(&user)?;
        self.users.push(user);
        Ok(())
    }

    fn user(&self, user_id: &str) -> Option<&UserProfile> {
        self.users.iter().find(|u| u.user_id == user_id)
    }

    fn users(&self) -> &[UserProfile] {
        &self.users
    }

    fn record_attempt(&mut self, attempt: Attempt) -> Result<String> {
        self.require_user(&attempt.user_id)?;
        if self.attempts.iter().any(|a| a.attempt_id == attempt.attempt_id) {
            return Err(StoreError::DuplicateId(attempt.attempt_id));
        }
        self.attempt_log.append(&attempt)?;
        let id = attempt.attempt_id.clone();
        self.attempts.push(attempt);
        Ok(id)
    }

    fn record_session(&mut self, session: SessionRecord) -> Result<String> {
        self.require_user(&session.user_id)?;
        if session.ended_at_ms.is_some_and(|e| e < session.started_at_ms) {
            return Err(StoreError::InvalidSession(session.session_id));
        }
        if self.sessions.iter().any(|s| s.session_id == session.session_id) {
            return Err(StoreError::DuplicateId(session.session_id));
        }
        self.session_log.append(&session)?;
        let id = session.session_id.clone();
        self.sessions.push(session);
        Ok(id)
    }

    fn attempts(&self) -> &[Attempt] {
        &self.attempts
    }

    fn sessions(&self) -> &[SessionRecord] {
        &self.sessions
    }
}
