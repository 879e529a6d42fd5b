use avil_core::sim::{Joints, Pose, SceneConfig, TrialScore};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u32 = 1;

/// A client request. `id` is echoed verbatim in the reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<Value>,
    #[serde(flatten)]
    pub message: ClientMessage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Reset { scene: SceneConfig },
    Step { joints: Joints },
    Nudge {
        #[serde(default)]
        dx: f64,
        #[serde(default)]
        dy: f64,
        #[serde(default)]
        dpitch: f64,
    },
    Observe,
    RecordStart,
    RecordStop { save: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    UnknownType,
    InvalidScene,
    InvalidJoints,
    IkFailed,
    NotRecording,
    AlreadyRecording,
    EmptyRecording,
    SaveFailed,
    Internal,
    IdleTimeout,
}

/// Joint, pose and trial state after a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub joints: Joints,
    pub pose: Pose,
    pub step_count: u64,
    pub collision: bool,
    pub score: TrialScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        protocol_version: u32,
        session: String,
        height: usize,
        width: usize,
        scene: SceneConfig,
        joint_limits: Vec<(f64, f64)>,
        max_joint_speed: f64,
    },
    Reset {
        #[serde(skip_serializing_if = "Option::is_none")]
        id: Option<Value>,
        scene: SceneConfig,
        #[serde(flatten)]
        arm: ArmReport,
    },
    Step {
        #[serde(skip_serializing_if = "Option::is_none")]
        id: Option<Value>,
        clamped: bool,
        #[serde(flatten)]
        arm: ArmReport,
    },
    Nudge {
        #[serde(skip_serializing_if = "Option::is_none")]
        id: Option<Value>,
        clamped: bool,
        #[serde(flatten)]
        arm: ArmReport,
    },
    Observe {
        #[serde(skip_serializing_if = "Option::is_none")]
        id: Option<Value>,
        height: usize,
        width: usize,
        /// Base-64 of a binary PPM (P6) image.
        frame: String,
        recording: bool,
        recorded_steps: usize,
        #[serde(flatten)]
        arm: ArmReport,
    },
    RecordStart {
        #[serde(skip_serializing_if = "Option::is_none")]
        id: Option<Value>,
        #[serde(flatten)]
        arm: ArmReport,
    },
    RecordStop {
        #[serde(skip_serializing_if = "Option::is_none")]
        id: Option<Value>,
        saved: bool,
        steps: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        episode_id: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        path: Option<String>,
        score: TrialScore,
    },
    Error {
        #[serde(skip_serializing_if = "Option::is_none")]
        id: Option<Value>,
        code: ErrorCode,
        message: String,
    },
    Shutdown {
        #[serde(skip_serializing_if = "Option::is_none")]
        saved_episode: Option<String>,
    },
}

impl ServerMessage {
    pub fn error(id: Option<Value>, code: ErrorCode, message: impl Into<String>) -> Self {
        ServerMessage::Error {
            id,
            code,
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialise")
    }
}

const KNOWN_TYPES: [&str; 6] = ["reset", "step", "nudge", "observe", "record_start", "record_stop"];

/// Parse a text frame. On failure, returns the error reply, carrying the
/// request id when one could be read.
pub fn parse(text: &str) -> Result<Envelope, ServerMessage> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| ServerMessage::error(None, ErrorCode::BadRequest, format!("malformed JSON: {e}")))?;
    let id = value.get("id").cloned();
    let Some(kind) = value.get("type").and_then(Value::as_str) else {
        return Err(ServerMessage::error(id, ErrorCode::BadRequest, "missing string field \"type\""));
    };
    if !KNOWN_TYPES.contains(&kind) {
        return Err(ServerMessage::error(id, ErrorCode::UnknownType, format!("unknown message type {kind:?}")));
    }
    serde_json::from_value(value).map_err(|e| ServerMessage::error(id, ErrorCode::BadRequest, e.to_string()))
}
