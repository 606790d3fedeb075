use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{SessionConfig, SessionEvent, SessionReport};
use crate::dualtask::PlaybackSchedule;
use crate::obstacle::ObstacleSpec;
use crate::pose::PoseSample;
use crate::sim::{Scenario, WalkerParams};
use crate::walkway::PressureFrame;
use crate::wire::{self, FrameReader, WireError};

pub const SESSION_FILE: &str = "session.json";
pub const FRAMES_FILE: &str = "frames.bin";
pub const POSES_FILE: &str = "poses.bin";

#[derive(Debug, Error)]
pub enum RecordingError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON at line {line}, column {column}: {message}")]
    Json {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: corrupt data at byte offset {offset}: {source}")]
    Corrupt {
        path: PathBuf,
        offset: usize,
        #[source]
        source: WireError,
    },
}

/// Where the streams came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceInfo {
    Simulator { params: WalkerParams, scenario: Scenario },
    Replay { from: String },
    External,
}

/// Everything a session captured. `frames` and `poses` live in sibling
/// binary files; the rest is `session.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub engine_version: String,
    pub config: SessionConfig,
    pub source: SourceInfo,
    pub obstacles: Vec<ObstacleSpec>,
    pub sentences: Option<PlaybackSchedule>,
    pub events: Vec<SessionEvent>,
    pub frame_rate_hz: f64,
    pub pose_rate_hz: f64,
    pub aborted: bool,
    /// Seconds since Walking began at which the walk stopped.
    pub walk_end_time: f64,
    pub rejected_frames: u64,
    pub report: Option<SessionReport>,
    #[serde(skip)]
    pub frames: Vec<PressureFrame>,
    #[serde(skip)]
    pub poses: Vec<PoseSample>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RecordingError + '_ {
    move |source| RecordingError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl Recording {
    pub fn write(&self, dir: &Path) -> Result<(), RecordingError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let json = serde_json::to_string_pretty(self).expect("recording serializes");
        let p = dir.join(SESSION_FILE);
        std::fs::write(&p, json).map_err(io_err(&p))?;
        let p = dir.join(FRAMES_FILE);
        let frames = wire::encode_frames(&self.frames).map_err(|source| RecordingError::Corrupt {
            path: p.clone(),
            offset: 0,
            source,
        })?;
        std::fs::write(&p, frames).map_err(io_err(&p))?;
        let p = dir.join(POSES_FILE);
        std::fs::write(&p, wire::encode_poses(&self.poses)).map_err(io_err(&p))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self, RecordingError> {
        let p = dir.join(SESSION_FILE);
        let text = std::fs::read_to_string(&p).map_err(io_err(&p))?;
        let mut rec: Recording = serde_json::from_str(&text).map_err(|e| RecordingError::Json {
            path: p.clone(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;

        let p = dir.join(FRAMES_FILE);
        let bytes = std::fs::read(&p).map_err(io_err(&p))?;
        let mut reader = FrameReader::new(&bytes);
        loop {
            let offset = reader.position();
            match reader.next() {
                None => break,
                Some(Ok(f)) => rec.frames.push(f),
                Some(Err(source)) => {
                    return Err(RecordingError::Corrupt {
                        path: p,
                        offset,
                        source,
                    })
                }
            }
        }

        let p = dir.join(POSES_FILE);
        let bytes = std::fs::read(&p).map_err(io_err(&p))?;
        rec.poses = wire::decode_poses(&bytes).map_err(|source| RecordingError::Corrupt {
            path: p,
            offset: match &source {
                WireError::Truncated { .. } => bytes.len() - (bytes.len().saturating_sub(wire::POSE_HEADER_LEN)) % wire::POSE_RECORD_LEN,
                _ => 0,
            },
            source,
        })?;
        Ok(rec)
    }
}
