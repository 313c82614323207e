//! Wire messages. One JSON object per websocket text frame, tagged by
//! `type` and versioned by `v`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PROTOCOL_VERSION: u32 = 1;

/// Upper bound on the reference points sent with each state message.
pub const MAX_REFERENCE_POINTS: usize = 50;

fn current_version() -> u32 {
    PROTOCOL_VERSION
}

/// Server to client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServerMessage {
    State(StateBroadcast),
    /// Outcome of a control action.
    Ack {
        v: u32,
        action: String,
        ok: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
    /// A frame the server could not use.
    Error { v: u32, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateBroadcast {
    pub v: u32,
    pub session: String,
    /// Simulation time, seconds.
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    /// Speed, m/s.
    pub vel: f64,
    /// Error state `[e1, e2, e3, e4]` against the selected trajectory.
    pub e: [f64; 4],
    /// Reference points ahead of the vehicle.
    #[serde(rename = "ref")]
    pub reference: Vec<[f64; 2]>,
    /// Reference speed at the vehicle's projection, m/s.
    pub v_ref: f64,
    /// Cross-track error, meters.
    pub ct_err: f64,
    pub recording: bool,
    /// Samples recorded in this session so far.
    pub samples: usize,
    /// Arc length of the projection over the trajectory length, in [0, 1].
    pub progress: f64,
    pub trajectory: String,
    /// Command applied over the current tick.
    pub steering: f64,
    pub throttle: f64,
    /// False while no client is connected and the simulation is paused.
    pub running: bool,
}

/// Client to server. Unknown fields are ignored so newer clients can add
/// optional data without a version bump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Cmd {
        #[serde(default = "current_version")]
        v: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session: Option<String>,
        /// Client clock, informational only.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        client_t: Option<f64>,
        steering: f64,
        throttle: f64,
    },
    Ctl {
        #[serde(default = "current_version")]
        v: u32,
        #[serde(flatten)]
        action: ControlAction,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ControlAction {
    StartRecording,
    StopRecording,
    /// Back to the start of the selected trajectory, at rest.
    Reset,
    SelectTrajectory { id: String },
    /// Writes the session's samples to disk and starts a new session.
    Finalize,
}

impl ControlAction {
    pub fn name(&self) -> &'static str {
        match self {
            ControlAction::StartRecording => "start_recording",
            ControlAction::StopRecording => "stop_recording",
            ControlAction::Reset => "reset",
            ControlAction::SelectTrajectory { .. } => "select_trajectory",
            ControlAction::Finalize => "finalize",
        }
    }
}

impl ClientMessage {
    /// Parses one frame and checks its version. Range problems in commands
    /// are not errors; they are clamped when applied.
    pub fn parse(text: &str) -> Result<Self> {
        let msg: ClientMessage = serde_json::from_str(text).map_err(|e| Error::Protocol(e.to_string()))?;
        let v = match &msg {
            ClientMessage::Cmd { v, .. } | ClientMessage::Ctl { v, .. } => *v,
        };
        if v != PROTOCOL_VERSION {
            return Err(Error::Protocol(format!(
                "unsupported protocol version {v}, expected {PROTOCOL_VERSION}"
            )));
        }
        Ok(msg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("client messages always serialize")
    }
}

impl ServerMessage {
    pub fn ack(action: &ControlAction, ok: bool, detail: Option<String>) -> Self {
        ServerMessage::Ack {
            v: PROTOCOL_VERSION,
            action: action.name().to_string(),
            ok,
            detail,
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        ServerMessage::Error {
            v: PROTOCOL_VERSION,
            message: message.into(),
        }
    }

    /// Serializes the message. Non-finite numbers become `null`, which no
    /// well-formed state produces.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }

    /// Parses and validates a server frame, as a client would.
    pub fn parse(text: &str) -> Result<Self> {
        let msg: ServerMessage = serde_json::from_str(text).map_err(|e| Error::Protocol(e.to_string()))?;
        msg.validate()?;
        Ok(msg)
    }

    /// Checks the schema's value constraints beyond field presence.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Protocol(m));
        match self {
            ServerMessage::State(s) => {
                if s.v != PROTOCOL_VERSION {
                    return bad(format!("state version {}", s.v));
                }
                let numbers = [s.t, s.x, s.y, s.theta, s.vel, s.v_ref, s.ct_err, s.progress, s.steering, s.throttle];
                if !numbers.iter().chain(&s.e).all(|v| v.is_finite()) {
                    return bad("non-finite number in state".into());
                }
                if s.reference.len() > MAX_REFERENCE_POINTS || s.reference.iter().flatten().any(|v| !v.is_finite()) {
                    return bad(format!("reference window of {} points", s.reference.len()));
                }
                if !(-1.0..=1.0).contains(&s.steering) || !(0.0..=1.0).contains(&s.throttle) {
                    return bad(format!("command out of range: {} {}", s.steering, s.throttle));
                }
                if !(0.0..=1.0).contains(&s.progress) || s.vel < 0.0 || s.t < 0.0 {
                    return bad("progress, speed or time out of range".into());
                }
                Ok(())
            }
            ServerMessage::Ack { v, .. } | ServerMessage::Error { v, .. } if *v != PROTOCOL_VERSION => {
                bad(format!("version {v}"))
            }
            _ => Ok(()),
        }
    }
}
