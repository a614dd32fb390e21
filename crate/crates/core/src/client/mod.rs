//! Actor and learner client SDK.
//!
//! Every client object owns one blocking connection and is driven by a
//! single thread. The SDK never spawns threads of its own.

mod actor;
mod backoff;
mod learner;
mod puller;

use std::io::{self, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

use bytes::Bytes;
use thiserror::Error;

pub use actor::{ActorClient, ActorConfig, ActorCounters, PushReport};
pub use backoff::Backoff;
pub use learner::{IterationReport, LearnerClient, LearnerClientConfig, LocalReplayConfig, TrainOutput};
pub use puller::{PullReport, ReplayPuller};

use crate::protocol::{
    write_message, ErrorCode, FrameDecoder, Hello, HelloAck, Message, ProtocolError, Role, ServerMode,
    StatsSnapshot,
};
use crate::replay::DomainError;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("server error {code}: {detail}")]
    Server { code: ErrorCode, detail: String },
    #[error("expected {expected}, got {got}")]
    Unexpected { expected: &'static str, got: &'static str },
    #[error("connection closed by server")]
    Closed,
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("train_fn failed: {0}")]
    Train(String),
}

impl ClientError {
    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            ClientError::Server { code, .. } => Some(*code),
            _ => None,
        }
    }

    pub fn is_retryable(&self) -> bool {
        self.code().is_some_and(ErrorCode::is_retryable)
    }
}

/// A published parameter blob as seen by a client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterBlob {
    pub version: u64,
    pub bytes: Bytes,
}

/// One handshaken session with the server.
#[derive(Debug)]
pub struct Connection {
    stream: TcpStream,
    decoder: FrameDecoder,
    ack: HelloAck,
    role: Role,
    bytes_sent: u64,
    bytes_received: u64,
}

impl Connection {
    pub fn connect<A: ToSocketAddrs>(addr: A, hello: Hello) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr)?;
        Self::handshake(stream, hello)
    }

    /// Retries the TCP connect until `timeout`, for servers still starting.
    pub fn connect_with_retry(addr: SocketAddr, hello: Hello, timeout: Duration) -> Result<Self, ClientError> {
        let deadline = Instant::now() + timeout;
        loop {
            match TcpStream::connect(addr) {
                Ok(stream) => return Self::handshake(stream, hello),
                Err(e) if Instant::now() >= deadline => return Err(e.into()),
                Err(_) => thread::sleep(Duration::from_millis(20)),
            }
        }
    }

    fn handshake(stream: TcpStream, hello: Hello) -> Result<Self, ClientError> {
        stream.set_nodelay(true)?;
        let mut conn = Self {
            stream,
            decoder: FrameDecoder::new(None),
            ack: HelloAck {
                session_id: 0,
                mode: ServerMode::ColocatedReplay,
                state_dim: hello.state_dim,
                action_count: hello.action_count,
                flags: 0,
                replay_capacity: 0,
            },
            role: hello.role,
            bytes_sent: 0,
            bytes_received: 0,
        };
        match conn.request(&Message::Hello(hello))? {
            Message::HelloAck(ack) => {
                conn.decoder.set_state_dim(Some(ack.state_dim));
                conn.ack = ack;
                Ok(conn)
            }
            other => Err(ClientError::Unexpected {
                expected: "HELLO_ACK",
                got: other.name(),
            }),
        }
    }

    pub fn ack(&self) -> &HelloAck {
        &self.ack
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn mode(&self) -> ServerMode {
        self.ack.mode
    }

    pub fn session_id(&self) -> u32 {
        self.ack.session_id
    }

    pub fn state_dim(&self) -> u32 {
        self.ack.state_dim
    }

    pub fn action_count(&self) -> u32 {
        self.ack.action_count
    }

    pub fn bytes_sent(&self) -> u64 {
        self.bytes_sent
    }

    pub fn bytes_received(&self) -> u64 {
        self.bytes_received
    }

    pub fn send(&mut self, msg: &Message) -> Result<(), ClientError> {
        let n = write_message(&mut self.stream, msg)?;
        self.stream.flush()?;
        self.bytes_sent += n as u64;
        Ok(())
    }

    /// Blocks until one whole frame is decoded. ERROR frames are returned as
    /// messages, not mapped.
    pub fn recv(&mut self) -> Result<Message, ClientError> {
        loop {
            if let Some((msg, n)) = self.decoder.next_message()? {
                self.bytes_received += n as u64;
                return Ok(msg);
            }
            if self.decoder.read_from(&mut self.stream)? == 0 {
                return Err(ClientError::Closed);
            }
        }
    }

    /// Sends one request and waits for its reply; an ERROR reply becomes
    /// `ClientError::Server`.
    pub fn request(&mut self, msg: &Message) -> Result<Message, ClientError> {
        self.send(msg)?;
        match self.recv()? {
            Message::Error { code, detail } => Err(ClientError::Server { code, detail }),
            reply => Ok(reply),
        }
    }

    pub fn stats(&mut self) -> Result<StatsSnapshot, ClientError> {
        match self.request(&Message::StatsReq)? {
            Message::StatsResp(s) => Ok(s),
            other => Err(unexpected("STATS_RESP", &other)),
        }
    }

    pub fn pull_params(&mut self, min_version: u64) -> Result<ParameterBlob, ClientError> {
        match self.request(&Message::PullParams { min_version })? {
            Message::ParamsBlob { version, blob } => Ok(ParameterBlob { version, bytes: blob }),
            other => Err(unexpected("PARAMS_BLOB", &other)),
        }
    }

    pub fn set_params(&mut self, version: u64, blob: Bytes) -> Result<u64, ClientError> {
        match self.request(&Message::SetParams { version, blob })? {
            Message::SetAck { version } => Ok(version),
            other => Err(unexpected("SET_ACK", &other)),
        }
    }
}

pub(crate) fn unexpected(expected: &'static str, got: &Message) -> ClientError {
    ClientError::Unexpected {
        expected,
        got: got.name(),
    }
}

pub(crate) fn hello(role: Role, client_id: u32, state_dim: u32, action_count: u32, flags: u32) -> Hello {
    Hello {
        role,
        client_id,
        state_dim,
        action_count,
        flags,
    }
}
