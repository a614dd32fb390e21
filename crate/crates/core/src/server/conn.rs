//! Per-connection I/O handler: one dedicated thread per client.

use std::io;
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, TrySendError};
use log::{debug, warn};

use super::replay_thread::{ReplayCommand, SampleError};
use super::stats::{bump, Op};
use super::transport::TransportStream;
use super::{Backend, Shared};
use crate::protocol::{
    push_record_len, sampled_record_len, write_message, ErrorCode, FrameDecoder, HelloAck, Message,
    ProtocolError, PushRecord, Role, MAX_PAYLOAD,
};

const POLL_INTERVAL: Duration = Duration::from_millis(50);

#[derive(Debug, Clone, Copy)]
struct Session {
    id: u32,
    role: Role,
    state_dim: u32,
}

struct Reply {
    msg: Message,
    close: bool,
    op: Option<Op>,
}

impl Reply {
    fn ok(msg: Message, op: Op) -> Self {
        Self {
            msg,
            close: false,
            op: Some(op),
        }
    }

    fn refuse(code: ErrorCode, detail: impl Into<String>) -> Self {
        Self {
            msg: Message::error(code, detail),
            close: false,
            op: None,
        }
    }

    fn fatal(code: ErrorCode, detail: impl Into<String>) -> Self {
        Self {
            msg: Message::error(code, detail),
            close: true,
            op: None,
        }
    }

    fn with_op(mut self, op: Op) -> Self {
        self.op = Some(op);
        self
    }
}

struct Handler {
    shared: Arc<Shared>,
    session: Option<Session>,
}

pub(crate) fn serve<S: TransportStream>(shared: Arc<Shared>, mut stream: S, peer: String) {
    if let Err(e) = stream.set_poll_interval(POLL_INTERVAL) {
        warn!("{peer}: cannot set poll interval: {e}");
    }
    let mut decoder = FrameDecoder::new(None);
    let mut handler = Handler {
        shared: Arc::clone(&shared),
        session: None,
    };
    'conn: while !shared.shutdown.load(Ordering::Relaxed) {
        match decoder.read_from(&mut stream) {
            Ok(0) => break,
            Ok(_) => {}
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut | io::ErrorKind::Interrupted
                ) =>
            {
                continue
            }
            Err(e) => {
                debug!("{peer}: read failed: {e}");
                break;
            }
        }
        loop {
            let (msg, frame_len) = match decoder.next_message() {
                Ok(Some(m)) => m,
                Ok(None) => break,
                Err(e) => {
                    let code = match e {
                        ProtocolError::Malformed(_) => ErrorCode::MALFORMED,
                        _ => ErrorCode::PROTOCOL,
                    };
                    debug!("{peer}: closing on bad frame: {e}");
                    let _ = send(&shared, &mut stream, &Message::error(code, e.to_string()));
                    break 'conn;
                }
            };
            bump(&shared.stats.bytes_in, frame_len as u64);
            let started = Instant::now();
            let reply = handler.handle(msg);
            if let Message::HelloAck(ack) = &reply.msg {
                decoder.set_state_dim(Some(ack.state_dim));
            }
            if send(&shared, &mut stream, &reply.msg).is_err() {
                break 'conn;
            }
            if let Some(op) = reply.op {
                shared.stats.record_latency(op, started.elapsed());
            }
            if reply.close {
                break 'conn;
            }
        }
    }
    if let (Some(session), Backend::Colocated { commands, .. }) = (handler.session, &shared.backend) {
        let _ = commands.send(ReplayCommand::SessionClosed(session.id));
    }
}

fn send<S: TransportStream>(shared: &Shared, stream: &mut S, msg: &Message) -> io::Result<()> {
    let n = write_message(stream, msg)?;
    bump(&shared.stats.bytes_out, n as u64);
    Ok(())
}

fn valid_priority(p: f64) -> bool {
    p.is_finite() && p >= 0.0
}

impl Handler {
    fn handle(&mut self, msg: Message) -> Reply {
        let Some(session) = self.session else {
            return match msg {
                Message::Hello(h) => self.hello(h),
                other => Reply::fatal(
                    ErrorCode::HANDSHAKE_REQUIRED,
                    format!("expected HELLO, got {}", other.name()),
                ),
            };
        };
        match msg {
            Message::PushExperiences(recs) => self.push(session, recs),
            Message::SetParams { version, blob } => {
                if session.role != Role::Learner {
                    return Reply::refuse(ErrorCode::FORBIDDEN, "only a learner may set parameters");
                }
                let version = self.shared.params.set(blob, version);
                bump(&self.shared.stats.param_sets, 1);
                Reply::ok(Message::SetAck { version }, Op::SetParams)
            }
            Message::PullParams { min_version } => {
                let snap = self.shared.params.get();
                bump(&self.shared.stats.param_pulls, 1);
                let blob = if min_version != 0 && min_version >= snap.version {
                    bytes::Bytes::new()
                } else {
                    snap.blob.clone()
                };
                Reply::ok(
                    Message::ParamsBlob {
                        version: snap.version,
                        blob,
                    },
                    Op::PullParams,
                )
            }
            Message::SampleReq { batch_size } => self.sample(session, batch_size),
            Message::UpdatePriorities(updates) => self.update(session, updates),
            Message::PullExperiences { max_count } => self.drain(session, max_count),
            Message::StatsReq => Reply {
                msg: Message::StatsResp(self.shared.snapshot()),
                close: false,
                op: None,
            },
            Message::Hello(_) => Reply::fatal(ErrorCode::PROTOCOL, "duplicate HELLO"),
            other => Reply::fatal(
                ErrorCode::PROTOCOL,
                format!("{} is not a request", other.name()),
            ),
        }
    }

    fn hello(&mut self, h: crate::protocol::Hello) -> Reply {
        let cfg = &self.shared.config;
        if h.state_dim != cfg.state_dim || h.action_count != cfg.action_count {
            return Reply::fatal(
                ErrorCode::DIM_MISMATCH,
                format!(
                    "server runs state_dim={} action_count={}, client sent {}/{}",
                    cfg.state_dim, cfg.action_count, h.state_dim, h.action_count
                ),
            );
        }
        let id = self.shared.next_session.fetch_add(1, Ordering::Relaxed);
        self.session = Some(Session {
            id,
            role: h.role,
            state_dim: h.state_dim,
        });
        Reply {
            msg: Message::HelloAck(HelloAck {
                session_id: id,
                mode: cfg.mode,
                state_dim: cfg.state_dim,
                action_count: cfg.action_count,
                flags: h.flags,
                replay_capacity: cfg.capacity,
            }),
            close: false,
            op: None,
        }
    }

    fn push(&self, session: Session, recs: Vec<PushRecord>) -> Reply {
        if session.role != Role::Actor {
            return Reply::refuse(ErrorCode::FORBIDDEN, "only an actor may push experiences");
        }
        let stats = &self.shared.stats;
        let n = recs.len() as u64;
        bump(&stats.pushes, 1);
        bump(&stats.experiences_pushed, n);
        let action_count = self.shared.config.action_count;
        if let Some(bad) = recs
            .iter()
            .position(|r| r.experience.action >= action_count || !valid_priority(r.priority))
        {
            bump(&stats.experiences_rejected, n);
            return Reply::fatal(
                ErrorCode::MALFORMED,
                format!("record {bad} has an out-of-range action or invalid priority"),
            );
        }
        if recs.is_empty() {
            let depth = self.shared.queue_depth() as u32;
            return Reply::ok(
                Message::PushAck {
                    accepted: 0,
                    queue_depth: depth,
                },
                Op::Push,
            );
        }
        let depth = match &self.shared.backend {
            Backend::SharedMemory { queue } => {
                // count before publishing so a racing drain never underflows
                bump(&stats.queued_experiences, n);
                match queue.push(recs) {
                    Ok(depth) => Some(depth as u64),
                    Err(_) => {
                        stats.queued_experiences.fetch_sub(n, Ordering::Relaxed);
                        None
                    }
                }
            }
            Backend::Colocated { ingress, .. } => {
                bump(&stats.queued_experiences, n);
                match ingress.try_send(recs) {
                    Ok(()) => Some(ingress.len() as u64),
                    Err(TrySendError::Full(_) | TrySendError::Disconnected(_)) => {
                        stats.queued_experiences.fetch_sub(n, Ordering::Relaxed);
                        None
                    }
                }
            }
        };
        match depth {
            Some(depth) => {
                stats.observe_queue_depth(depth);
                Reply::ok(
                    Message::PushAck {
                        accepted: n as u32,
                        queue_depth: depth as u32,
                    },
                    Op::Push,
                )
            }
            None => {
                bump(&stats.experiences_rejected, n);
                Reply::refuse(ErrorCode::BACKPRESSURE, "ingress queue is full").with_op(Op::Push)
            }
        }
    }

    fn sample(&self, session: Session, batch_size: u32) -> Reply {
        let Backend::Colocated { commands, .. } = &self.shared.backend else {
            return Reply::refuse(ErrorCode::WRONG_MODE, "sampling is served in mode B only");
        };
        if session.role != Role::Learner {
            return Reply::refuse(ErrorCode::FORBIDDEN, "only a learner may sample");
        }
        let record_len = sampled_record_len(session.state_dim);
        if 4 + batch_size as usize * record_len > MAX_PAYLOAD {
            return Reply::refuse(ErrorCode::TOO_LARGE, "response would exceed the frame cap");
        }
        let (tx, rx) = bounded(1);
        let cmd = ReplayCommand::Sample {
            session: session.id,
            batch_size,
            reply: tx,
        };
        let result = commands
            .send(cmd)
            .ok()
            .and_then(|_| rx.recv().ok());
        match result {
            Some(Ok(records)) => {
                let stats = &self.shared.stats;
                let n = records.len() as u64;
                bump(&stats.sample_requests, 1);
                bump(&stats.experiences_sampled, n);
                bump(&stats.sampled_record_bytes_out, n * record_len as u64);
                Reply::ok(Message::SampleResp(records), Op::Sample)
            }
            Some(Err(SampleError::NotReady)) => {
                Reply::refuse(ErrorCode::NOT_READY, "replay is empty").with_op(Op::Sample)
            }
            None => Reply::fatal(ErrorCode::INTERNAL, "replay thread unavailable"),
        }
    }

    fn update(&self, session: Session, updates: Vec<(u64, f64)>) -> Reply {
        let Backend::Colocated { commands, .. } = &self.shared.backend else {
            return Reply::refuse(ErrorCode::WRONG_MODE, "priority updates are served in mode B only");
        };
        if session.role != Role::Learner {
            return Reply::refuse(ErrorCode::FORBIDDEN, "only a learner may update priorities");
        }
        if let Some(i) = updates.iter().position(|&(_, p)| !valid_priority(p)) {
            return Reply::fatal(ErrorCode::MALFORMED, format!("update {i} has an invalid priority"));
        }
        if updates.is_empty() {
            return Reply::ok(
                Message::UpdateAck {
                    applied: 0,
                    stale: 0,
                },
                Op::UpdatePriorities,
            );
        }
        let (tx, rx) = bounded(1);
        let cmd = ReplayCommand::Update {
            session: session.id,
            updates,
            reply: tx,
        };
        match commands.send(cmd).ok().and_then(|_| rx.recv().ok()) {
            Some((applied, stale)) => Reply::ok(Message::UpdateAck { applied, stale }, Op::UpdatePriorities),
            None => Reply::fatal(ErrorCode::INTERNAL, "replay thread unavailable"),
        }
    }

    fn drain(&self, session: Session, max_count: u32) -> Reply {
        let Backend::SharedMemory { queue } = &self.shared.backend else {
            return Reply::refuse(ErrorCode::WRONG_MODE, "experience draining is served in mode A only");
        };
        if session.role != Role::ReplayPuller {
            return Reply::refuse(ErrorCode::FORBIDDEN, "only a replay puller may drain experiences");
        }
        let record_len = push_record_len(session.state_dim);
        let cap = (MAX_PAYLOAD - 4) / record_len;
        let recs = queue.drain((max_count as usize).min(cap));
        let stats = &self.shared.stats;
        let n = recs.len() as u64;
        stats.queued_experiences.fetch_sub(n, Ordering::Relaxed);
        bump(&stats.experience_pulls, 1);
        bump(&stats.experiences_drained, n);
        bump(&stats.drained_record_bytes_out, n * record_len as u64);
        Reply::ok(Message::ExperiencesBlob(recs), Op::PullExperiences)
    }
}
