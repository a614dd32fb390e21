//! Length-prefixed binary wire protocol.
//!
//! Every frame is a 12-byte header followed by `payload_len` payload bytes:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "DRPL" (0x44 0x52 0x50 0x4C)
//! 4       1     version (1)
//! 5       1     msg_type
//! 6       2     flags (reserved, 0)
//! 8       4     payload_len (u32 LE, <= 256 MiB)
//! ```
//!
//! All multi-byte fields are little-endian. Experience records carry
//! `state_dim` f32 values per state vector, where `state_dim` is fixed by the
//! session handshake; the decoder therefore needs it to size records. See
//! `docs/protocol.md` for the full byte layout of each message.

mod codec;
pub mod fixtures;
mod stream;

use bytes::Bytes;
use thiserror::Error;

use crate::replay::Experience;

pub use codec::{decode, decode_frame, encode, encode_parts, payload_len, write_message};
pub use stream::FrameDecoder;

pub const MAGIC: [u8; 4] = *b"DRPL";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 12;
/// Hard cap on `payload_len`.
pub const MAX_PAYLOAD: usize = 256 * 1024 * 1024;

/// HELLO flag: the client intends to send version-gated parameter pulls.
pub const FLAG_VERSION_GATED_PULL: u32 = 1;

pub mod msg_type {
    pub const HELLO: u8 = 0x01;
    pub const HELLO_ACK: u8 = 0x02;
    pub const PUSH_EXPERIENCES: u8 = 0x10;
    pub const PUSH_ACK: u8 = 0x11;
    pub const SET_PARAMS: u8 = 0x20;
    pub const SET_ACK: u8 = 0x21;
    pub const PULL_PARAMS: u8 = 0x22;
    pub const PARAMS_BLOB: u8 = 0x23;
    pub const SAMPLE_REQ: u8 = 0x30;
    pub const SAMPLE_RESP: u8 = 0x31;
    pub const UPDATE_PRIORITIES: u8 = 0x32;
    pub const UPDATE_ACK: u8 = 0x33;
    pub const PULL_EXPERIENCES: u8 = 0x40;
    pub const EXPERIENCES_BLOB: u8 = 0x41;
    pub const STATS_REQ: u8 = 0x50;
    pub const STATS_RESP: u8 = 0x51;
    pub const ERROR: u8 = 0x7F;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    /// Not enough bytes yet; at least this many more are required.
    #[error("need {0} more bytes")]
    NeedMore(usize),
    /// Bad magic, version, unknown type or oversize length: the stream
    /// cannot be trusted past this point.
    #[error("protocol error: {0}")]
    Protocol(String),
    /// The header is valid but the payload does not match its type.
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("cannot encode: {0}")]
    Encode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Role {
    Actor = 1,
    Learner = 2,
    ReplayPuller = 3,
}

impl TryFrom<u8> for Role {
    type Error = ProtocolError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Role::Actor),
            2 => Ok(Role::Learner),
            3 => Ok(Role::ReplayPuller),
            _ => Err(ProtocolError::Malformed(format!("unknown role {v}"))),
        }
    }
}

/// Server topology, advertised in HELLO_ACK as ASCII `'A'` or `'B'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ServerMode {
    /// Shared-memory queue; replay lives with the learner and drains it.
    SharedMemory,
    /// Replay co-located with the shared memory; learner receives sampled batches.
    ColocatedReplay,
}

impl ServerMode {
    pub fn wire(self) -> u8 {
        match self {
            ServerMode::SharedMemory => b'A',
            ServerMode::ColocatedReplay => b'B',
        }
    }

    pub fn from_wire(v: u8) -> Result<Self, ProtocolError> {
        match v {
            b'A' => Ok(ServerMode::SharedMemory),
            b'B' => Ok(ServerMode::ColocatedReplay),
            _ => Err(ProtocolError::Malformed(format!("unknown server mode {v:#x}"))),
        }
    }

    pub fn letter(self) -> char {
        self.wire() as char
    }
}

impl std::str::FromStr for ServerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(ServerMode::SharedMemory),
            "B" | "b" => Ok(ServerMode::ColocatedReplay),
            _ => Err(format!("mode must be A or B, got {s:?}")),
        }
    }
}

impl std::fmt::Display for ServerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Error codes carried by ERROR frames. Unknown codes survive a round trip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ErrorCode(pub u16);

impl ErrorCode {
    pub const BACKPRESSURE: ErrorCode = ErrorCode(1);
    pub const WRONG_MODE: ErrorCode = ErrorCode(2);
    pub const NOT_READY: ErrorCode = ErrorCode(3);
    pub const FORBIDDEN: ErrorCode = ErrorCode(4);
    pub const MALFORMED: ErrorCode = ErrorCode(5);
    pub const PROTOCOL: ErrorCode = ErrorCode(6);
    pub const DIM_MISMATCH: ErrorCode = ErrorCode(7);
    pub const HANDSHAKE_REQUIRED: ErrorCode = ErrorCode(8);
    pub const TOO_LARGE: ErrorCode = ErrorCode(9);
    pub const INTERNAL: ErrorCode = ErrorCode(10);

    /// Codes a client should retry after waiting.
    pub fn is_retryable(self) -> bool {
        self == Self::BACKPRESSURE || self == Self::NOT_READY
    }

    pub fn name(self) -> &'static str {
        match self.0 {
            1 => "BACKPRESSURE",
            2 => "WRONG_MODE",
            3 => "NOT_READY",
            4 => "FORBIDDEN",
            5 => "MALFORMED",
            6 => "PROTOCOL",
            7 => "DIM_MISMATCH",
            8 => "HANDSHAKE_REQUIRED",
            9 => "TOO_LARGE",
            10 => "INTERNAL",
            _ => "UNKNOWN",
        }
    }
}

impl std::fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}({})", self.name(), self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hello {
    pub role: Role,
    pub client_id: u32,
    pub state_dim: u32,
    pub action_count: u32,
    pub flags: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HelloAck {
    pub session_id: u32,
    pub mode: ServerMode,
    pub state_dim: u32,
    pub action_count: u32,
    pub flags: u32,
    pub replay_capacity: u64,
}

/// Experience plus the priority it was pushed with.
#[derive(Debug, Clone, PartialEq)]
pub struct PushRecord {
    pub priority: f64,
    pub experience: Experience,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledRecord {
    pub slot_id: u64,
    pub probability: f64,
    pub experience: Experience,
}

/// Server counters as carried by STATS_RESP, in wire order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StatsSnapshot {
    pub pushes: u64,
    pub experiences_pushed: u64,
    pub experiences_added: u64,
    pub experiences_rejected: u64,
    pub experiences_drained: u64,
    pub experience_pulls: u64,
    pub param_sets: u64,
    pub param_pulls: u64,
    pub sample_requests: u64,
    pub experiences_sampled: u64,
    pub priority_updates_applied: u64,
    pub priority_updates_stale: u64,
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub sampled_record_bytes_out: u64,
    pub drained_record_bytes_out: u64,
    pub queue_depth: u64,
    pub queued_experiences: u64,
    pub queue_high_water: u64,
    pub replay_live: u64,
}

impl StatsSnapshot {
    pub const FIELD_COUNT: usize = 20;

    pub fn fields(&self) -> [(&'static str, u64); Self::FIELD_COUNT] {
        [
            ("pushes", self.pushes),
            ("experiences_pushed", self.experiences_pushed),
            ("experiences_added", self.experiences_added),
            ("experiences_rejected", self.experiences_rejected),
            ("experiences_drained", self.experiences_drained),
            ("experience_pulls", self.experience_pulls),
            ("param_sets", self.param_sets),
            ("param_pulls", self.param_pulls),
            ("sample_requests", self.sample_requests),
            ("experiences_sampled", self.experiences_sampled),
            ("priority_updates_applied", self.priority_updates_applied),
            ("priority_updates_stale", self.priority_updates_stale),
            ("bytes_in", self.bytes_in),
            ("bytes_out", self.bytes_out),
            ("sampled_record_bytes_out", self.sampled_record_bytes_out),
            ("drained_record_bytes_out", self.drained_record_bytes_out),
            ("queue_depth", self.queue_depth),
            ("queued_experiences", self.queued_experiences),
            ("queue_high_water", self.queue_high_water),
            ("replay_live", self.replay_live),
        ]
    }

    pub fn from_values(v: [u64; Self::FIELD_COUNT]) -> Self {
        Self {
            pushes: v[0],
            experiences_pushed: v[1],
            experiences_added: v[2],
            experiences_rejected: v[3],
            experiences_drained: v[4],
            experience_pulls: v[5],
            param_sets: v[6],
            param_pulls: v[7],
            sample_requests: v[8],
            experiences_sampled: v[9],
            priority_updates_applied: v[10],
            priority_updates_stale: v[11],
            bytes_in: v[12],
            bytes_out: v[13],
            sampled_record_bytes_out: v[14],
            drained_record_bytes_out: v[15],
            queue_depth: v[16],
            queued_experiences: v[17],
            queue_high_water: v[18],
            replay_live: v[19],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello(Hello),
    HelloAck(HelloAck),
    PushExperiences(Vec<PushRecord>),
    PushAck { accepted: u32, queue_depth: u32 },
    SetParams { version: u64, blob: Bytes },
    SetAck { version: u64 },
    PullParams { min_version: u64 },
    ParamsBlob { version: u64, blob: Bytes },
    SampleReq { batch_size: u32 },
    SampleResp(Vec<SampledRecord>),
    UpdatePriorities(Vec<(u64, f64)>),
    UpdateAck { applied: u32, stale: u32 },
    PullExperiences { max_count: u32 },
    ExperiencesBlob(Vec<PushRecord>),
    StatsReq,
    StatsResp(StatsSnapshot),
    Error { code: ErrorCode, detail: String },
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        use msg_type::*;
        match self {
            Message::Hello(_) => HELLO,
            Message::HelloAck(_) => HELLO_ACK,
            Message::PushExperiences(_) => PUSH_EXPERIENCES,
            Message::PushAck { .. } => PUSH_ACK,
            Message::SetParams { .. } => SET_PARAMS,
            Message::SetAck { .. } => SET_ACK,
            Message::PullParams { .. } => PULL_PARAMS,
            Message::ParamsBlob { .. } => PARAMS_BLOB,
            Message::SampleReq { .. } => SAMPLE_REQ,
            Message::SampleResp(_) => SAMPLE_RESP,
            Message::UpdatePriorities(_) => UPDATE_PRIORITIES,
            Message::UpdateAck { .. } => UPDATE_ACK,
            Message::PullExperiences { .. } => PULL_EXPERIENCES,
            Message::ExperiencesBlob(_) => EXPERIENCES_BLOB,
            Message::StatsReq => STATS_REQ,
            Message::StatsResp(_) => STATS_RESP,
            Message::Error { .. } => ERROR,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Message::Hello(_) => "HELLO",
            Message::HelloAck(_) => "HELLO_ACK",
            Message::PushExperiences(_) => "PUSH_EXPERIENCES",
            Message::PushAck { .. } => "PUSH_ACK",
            Message::SetParams { .. } => "SET_PARAMS",
            Message::SetAck { .. } => "SET_ACK",
            Message::PullParams { .. } => "PULL_PARAMS",
            Message::ParamsBlob { .. } => "PARAMS_BLOB",
            Message::SampleReq { .. } => "SAMPLE_REQ",
            Message::SampleResp(_) => "SAMPLE_RESP",
            Message::UpdatePriorities(_) => "UPDATE_PRIORITIES",
            Message::UpdateAck { .. } => "UPDATE_ACK",
            Message::PullExperiences { .. } => "PULL_EXPERIENCES",
            Message::ExperiencesBlob(_) => "EXPERIENCES_BLOB",
            Message::StatsReq => "STATS_REQ",
            Message::StatsResp(_) => "STATS_RESP",
            Message::Error { .. } => "ERROR",
        }
    }

    pub fn error(code: ErrorCode, detail: impl Into<String>) -> Self {
        Message::Error {
            code,
            detail: detail.into(),
        }
    }
}

/// Bytes of one experience body (action, reward, both states).
pub fn experience_body_len(state_dim: u32) -> usize {
    4 + 4 + 8 * state_dim as usize
}

/// Bytes of one PUSH_EXPERIENCES / EXPERIENCES_BLOB record.
pub fn push_record_len(state_dim: u32) -> usize {
    8 + experience_body_len(state_dim)
}

/// Bytes of one SAMPLE_RESP record.
pub fn sampled_record_len(state_dim: u32) -> usize {
    8 + 8 + experience_body_len(state_dim)
}
