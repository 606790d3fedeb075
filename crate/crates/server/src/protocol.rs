//! Control-channel messages. Text frames carry one JSON object tagged by
//! `type`; binary frames carry one `PWK1` pressure frame each.

// Errors are ready-to-send protocol messages.
#![allow(clippy::result_large_err)]

use serde::{Deserialize, Serialize};

use gaitway_core::session::{LiveMetrics, SessionConfig, SessionEvent, SessionReport, SessionState};

/// Messages a client may send.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    ConfigureSession {
        config: SessionConfig,
    },
    StartSession,
    Abort,
    SubmitRecall {
        numbers: Vec<u32>,
    },
    /// `decimation` forwards every n-th frame; `fps` is converted to a
    /// decimation against the 100 Hz stream. Omitting both means every frame.
    SubscribeFrames {
        #[serde(default)]
        decimation: Option<u32>,
        #[serde(default)]
        fps: Option<f64>,
    },
}

impl ClientMessage {
    pub fn name(&self) -> &'static str {
        match self {
            ClientMessage::ConfigureSession { .. } => "configure_session",
            ClientMessage::StartSession => "start_session",
            ClientMessage::Abort => "abort",
            ClientMessage::SubmitRecall { .. } => "submit_recall",
            ClientMessage::SubscribeFrames { .. } => "subscribe_frames",
        }
    }

    /// Commands that steer the session and so need the controller role.
    pub fn is_control(&self) -> bool {
        !matches!(self, ClientMessage::SubscribeFrames { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// Not JSON, or not a known message shape.
    Malformed,
    /// A field failed validation; `field` names it.
    InvalidField,
    /// Not allowed in the current session state.
    InvalidState,
    /// Another client holds the controller role.
    Busy,
    Internal,
}

/// Messages the server sends.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    /// A state transition (`previous` set) or the acknowledgement of a
    /// client message (`ack` set).
    StateUpdate {
        state: SessionState,
        previous: Option<SessionState>,
        time: f64,
        ack: Option<String>,
        config: SessionConfig,
    },
    MetricsUpdate {
        metrics: LiveMetrics,
    },
    ObstacleEvent {
        event: SessionEvent,
    },
    SentenceEvent {
        event: SessionEvent,
    },
    SessionReport {
        report: SessionReport,
    },
    Error {
        code: ErrorCode,
        message: String,
        field: Option<String>,
        /// Type of the client message that caused it, when known.
        request: Option<String>,
    },
}

impl ServerMessage {
    pub fn error(code: ErrorCode, message: impl Into<String>, field: Option<String>, request: Option<&str>) -> Self {
        ServerMessage::Error {
            code,
            message: message.into(),
            field,
            request: request.map(str::to_string),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

/// Parses a client text frame; the error is ready to send back.
pub fn parse_client(text: &str) -> Result<ClientMessage, ServerMessage> {
    serde_json::from_str(text).map_err(|e| {
        let request = serde_json::from_str::<serde_json::Value>(text)
            .ok()
            .and_then(|v| v.get("type").and_then(|t| t.as_str()).map(str::to_string));
        ServerMessage::Error {
            code: ErrorCode::Malformed,
            message: e.to_string(),
            field: None,
            request,
        }
    })
}
