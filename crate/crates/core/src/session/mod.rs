//! Assessment session: configuration, state machine, event log, live
//! ingestion, recordings and the derived report.

mod machine;
mod recording;
mod report;
mod runner;

pub use machine::{Input, SessionState, StateError, StateMachine};
pub use recording::{Recording, RecordingError, SourceInfo};
pub use report::{
    analyze_gait, compare_sessions, compute_report, ArtStats, CostRow, CostTable, GaitAnalysis, QualityFlags,
    SessionReport, WeightShift,
};
pub use runner::{merge_streams, run_session, run_simulated, sim_params, LiveMetrics, RecallScript, Session, SessionError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dualtask::{schedule_sentences, LoadCondition, PlaybackSchedule, SentenceBank};
use crate::obstacle::{make_schedule, ObstacleError, ObstacleHeight, ObstacleMode, ObstacleSpec, TrialResult};
use crate::seed::derive_seed;
use crate::walkway::WalkwayConfig;

pub const ENGINE_VERSION: &str = concat!("gaitway-core ", env!("CARGO_PKG_VERSION"));
pub const COUNTDOWN_S: f64 = 3.0;
/// Frame or pose gaps longer than this during Walking are logged.
pub const STREAM_GAP_S: f64 = 0.5;

/// A configuration problem tied to one field.
#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleConfig {
    pub mode: ObstacleMode,
    pub height_mm: u32,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub duration_s: f64,
    pub walkway: WalkwayConfig,
    /// `None` runs a walk without obstacles.
    pub obstacle: Option<ObstacleConfig>,
    pub condition: LoadCondition,
    pub seed: u64,
    /// Opaque label; never interpreted.
    pub participant: String,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            duration_s: 60.0,
            walkway: WalkwayConfig { tile_count: 20 },
            obstacle: Some(ObstacleConfig {
                mode: ObstacleMode::Anticipated,
                height_mm: 100,
                count: 5,
            }),
            condition: LoadCondition::default(),
            seed: 0,
            participant: String::new(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.duration_s > 0.0 && self.duration_s <= 600.0) {
            return Err(ConfigError::new("duration_s", "must be in (0, 600] s"));
        }
        self.walkway
            .validate()
            .map_err(|e| ConfigError::new("walkway.tile_count", e.to_string()))?;
        if let Some(o) = &self.obstacle {
            ObstacleHeight::new(o.height_mm).map_err(|e| ConfigError::new("obstacle.height_mm", e.to_string()))?;
            make_schedule(o.mode, o.height_mm, o.count, self.walkway.length(), 0).map_err(|e| match e {
                ObstacleError::IllegalHeight(_) => ConfigError::new("obstacle.height_mm", e.to_string()),
                _ => ConfigError::new("obstacle.count", e.to_string()),
            })?;
        }
        Ok(())
    }

    pub fn obstacles(&self) -> Vec<ObstacleSpec> {
        self.obstacle
            .as_ref()
            .and_then(|o| {
                make_schedule(o.mode, o.height_mm, o.count, self.walkway.length(), derive_seed(self.seed, "obstacles")).ok()
            })
            .unwrap_or_default()
    }

    pub fn sentences(&self, bank: &SentenceBank) -> Option<PlaybackSchedule> {
        self.condition
            .cognitive
            .then(|| schedule_sentences(bank, derive_seed(self.seed, "sentences")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cue {
    Success,
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Frames,
    Poses,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    StateChange {
        from: SessionState,
        to: SessionState,
    },
    ObstacleSpawn {
        obstacle_id: u32,
        x_position: f64,
        height_mm: u32,
        mode: ObstacleMode,
    },
    CrossingResult {
        trial: TrialResult,
    },
    SentenceStart {
        sentence_id: u32,
        text: String,
        numbers: Vec<u32>,
    },
    SentenceEnd {
        sentence_id: u32,
    },
    /// Success or failure feedback after a crossing.
    Cue {
        cue: Cue,
        obstacle_id: u32,
    },
    RecallSubmitted {
        numbers: Vec<u32>,
    },
    StreamGap {
        stream: StreamKind,
        from_time: f64,
        to_time: f64,
        missing_frames: u32,
    },
}

/// Logged occurrence; `time` is seconds since Walking began.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_errors_name_fields() {
        let mut c = SessionConfig::default();
        c.obstacle.as_mut().unwrap().height_mm = 60;
        assert_eq!(c.validate().unwrap_err().field, "obstacle.height_mm");
        let mut c = SessionConfig::default();
        c.obstacle.as_mut().unwrap().count = 50;
        assert_eq!(c.validate().unwrap_err().field, "obstacle.count");
        let c = SessionConfig { duration_s: 0.0, ..Default::default() };
        assert_eq!(c.validate().unwrap_err().field, "duration_s");
        let c = SessionConfig { walkway: WalkwayConfig { tile_count: 0 }, ..Default::default() };
        assert_eq!(c.validate().unwrap_err().field, "walkway.tile_count");
        assert!(SessionConfig::default().validate().is_ok());
    }

    #[test]
    fn derived_schedules_are_seeded() {
        let bank = SentenceBank::builtin();
        let mut c = SessionConfig::default();
        assert!(c.sentences(&bank).is_none());
        c.condition.cognitive = true;
        assert_eq!(c.sentences(&bank), c.sentences(&bank));
        let mut d = c.clone();
        d.seed = 1;
        assert_ne!(c.sentences(&bank), d.sentences(&bank));
        assert_eq!(c.obstacles().len(), 5);
    }

    #[test]
    fn event_json_shape() {
        let e = SessionEvent {
            time: 1.5,
            kind: EventKind::SentenceEnd { sentence_id: 4 },
        };
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(s, r#"{"time":1.5,"kind":"sentence_end","sentence_id":4}"#);
        assert_eq!(serde_json::from_str::<SessionEvent>(&s).unwrap(), e);
    }
}
