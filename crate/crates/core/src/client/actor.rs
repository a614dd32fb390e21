use std::collections::VecDeque;
use std::net::ToSocketAddrs;
use std::thread;
use std::time::{Duration, Instant};

use super::backoff::Backoff;
use super::{hello, unexpected, ClientError, Connection, ParameterBlob};
use crate::protocol::{ErrorCode, Message, PushRecord, Role, FLAG_VERSION_GATED_PULL};
use crate::replay::{DomainError, Experience, Priority, DEFAULT_EPSILON_BASE};

#[derive(Debug, Clone)]
pub struct ActorConfig {
    pub client_id: u32,
    pub actor_batch_size: u32,
    pub n_pull: u32,
    pub epsilon: f64,
    /// Send the cached version with PULL_PARAMS so unchanged blobs are not
    /// re-sent. Off by default: every cadence pull downloads the blob.
    pub version_gated_pull: bool,
    /// Push attempts before giving up on BACKPRESSURE; `None` retries forever.
    pub max_push_attempts: Option<u32>,
    pub backoff_seed: u64,
}

impl Default for ActorConfig {
    fn default() -> Self {
        Self {
            client_id: 0,
            actor_batch_size: 200,
            n_pull: 200,
            epsilon: DEFAULT_EPSILON_BASE,
            version_gated_pull: false,
            max_push_attempts: None,
            backoff_seed: 0,
        }
    }
}

impl ActorConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.actor_batch_size == 0 {
            return Err(DomainError::Invalid("actor_batch_size must be positive".into()));
        }
        if self.n_pull == 0 {
            return Err(DomainError::Invalid("n_pull must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(DomainError::Invalid(format!("epsilon {} outside [0, 1]", self.epsilon)));
        }
        Ok(())
    }
}

/// Outcome of one successful PUSH_EXPERIENCES.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PushReport {
    /// Request-send to response-decode of the accepted attempt.
    pub latency: Duration,
    pub accepted: u32,
    pub queue_depth: u32,
    /// 1 when the first attempt succeeded.
    pub attempts: u32,
    pub backoff: Duration,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ActorCounters {
    pub recorded: u64,
    pub pushed: u64,
    pub pushes: u64,
    pub push_retries: u64,
    pub param_pulls: u64,
    pub param_updates: u64,
}

/// Actor side of the loop: buffers experiences locally, pushes full batches
/// and pulls parameters every `n_pull` steps.
#[derive(Debug)]
pub struct ActorClient {
    conn: Connection,
    config: ActorConfig,
    local_buffer: VecDeque<(Experience, Priority)>,
    step_counter: u64,
    last_pull_step: u64,
    cached_params: Option<ParameterBlob>,
    last_pull_latency: Option<Duration>,
    backoff: Backoff,
    counters: ActorCounters,
}

impl ActorClient {
    pub fn connect<A: ToSocketAddrs>(
        addr: A,
        state_dim: u32,
        action_count: u32,
        config: ActorConfig,
    ) -> Result<Self, ClientError> {
        config.validate()?;
        let flags = if config.version_gated_pull {
            FLAG_VERSION_GATED_PULL
        } else {
            0
        };
        let conn = Connection::connect(addr, hello(Role::Actor, config.client_id, state_dim, action_count, flags))?;
        Ok(Self::from_connection(conn, config))
    }

    pub fn from_connection(conn: Connection, config: ActorConfig) -> Self {
        let backoff = Backoff::new(config.backoff_seed);
        Self {
            conn,
            config,
            local_buffer: VecDeque::new(),
            step_counter: 0,
            last_pull_step: 0,
            cached_params: None,
            last_pull_latency: None,
            backoff,
            counters: ActorCounters::default(),
        }
    }

    pub fn connection(&mut self) -> &mut Connection {
        &mut self.conn
    }

    pub fn config(&self) -> &ActorConfig {
        &self.config
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon
    }

    pub fn step_counter(&self) -> u64 {
        self.step_counter
    }

    pub fn buffered(&self) -> usize {
        self.local_buffer.len()
    }

    pub fn cached_params(&self) -> Option<&ParameterBlob> {
        self.cached_params.as_ref()
    }

    pub fn last_pull_latency(&self) -> Option<Duration> {
        self.last_pull_latency
    }

    pub fn counters(&self) -> ActorCounters {
        self.counters
    }

    /// Buffers one transition (one step). Pushes as soon as the buffer holds
    /// a full batch; returns the report of the last push made.
    ///
    /// On error the buffer keeps every unsent record; the next call retries
    /// the same batch first.
    pub fn actor_record(&mut self, experience: Experience, priority: Priority) -> Result<Option<PushReport>, ClientError> {
        experience.validate(self.conn.state_dim(), self.conn.action_count())?;
        self.local_buffer.push_back((experience, priority));
        self.step_counter += 1;
        self.counters.recorded += 1;
        self.flush_full_batches()
    }

    /// Pushes every full batch in the buffer.
    pub fn flush_full_batches(&mut self) -> Result<Option<PushReport>, ClientError> {
        let batch = self.config.actor_batch_size as usize;
        let mut last = None;
        while self.local_buffer.len() >= batch {
            last = Some(self.push_front(batch)?);
        }
        Ok(last)
    }

    /// Pushes whatever is buffered, even a partial batch.
    pub fn flush(&mut self) -> Result<Option<PushReport>, ClientError> {
        let mut last = self.flush_full_batches()?;
        if !self.local_buffer.is_empty() {
            last = Some(self.push_front(self.local_buffer.len())?);
        }
        Ok(last)
    }

    fn push_front(&mut self, n: usize) -> Result<PushReport, ClientError> {
        let records: Vec<PushRecord> = self
            .local_buffer
            .drain(..n)
            .map(|(experience, p)| PushRecord {
                priority: p.get(),
                experience,
            })
            .collect();
        let msg = Message::PushExperiences(records);
        let result = self.push_with_retry(&msg);
        if result.is_err() {
            let Message::PushExperiences(records) = msg else {
                unreachable!()
            };
            for rec in records.into_iter().rev() {
                // priorities came from valid `Priority` values
                let p = Priority::new(rec.priority).expect("buffered priority");
                self.local_buffer.push_front((rec.experience, p));
            }
        }
        result
    }

    fn push_with_retry(&mut self, msg: &Message) -> Result<PushReport, ClientError> {
        self.backoff.reset();
        let mut attempts = 0u32;
        let mut waited = Duration::ZERO;
        loop {
            attempts += 1;
            let started = Instant::now();
            match self.conn.request(msg) {
                Ok(Message::PushAck {
                    accepted,
                    queue_depth,
                }) => {
                    let latency = started.elapsed();
                    self.counters.pushes += 1;
                    self.counters.pushed += accepted as u64;
                    return Ok(PushReport {
                        latency,
                        accepted,
                        queue_depth,
                        attempts,
                        backoff: waited,
                    });
                }
                Ok(other) => return Err(unexpected("PUSH_ACK", &other)),
                Err(ClientError::Server {
                    code: ErrorCode::BACKPRESSURE,
                    detail,
                }) => {
                    if self.config.max_push_attempts.is_some_and(|max| attempts >= max) {
                        return Err(ClientError::Server {
                            code: ErrorCode::BACKPRESSURE,
                            detail,
                        });
                    }
                    self.counters.push_retries += 1;
                    let d = self.backoff.next_delay();
                    waited += d;
                    thread::sleep(d);
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Pulls parameters when the step counter is a positive multiple of
    /// `n_pull`, at most once per step. Returns the blob only when it is
    /// newer than the cached one.
    pub fn actor_maybe_pull_params(&mut self) -> Result<Option<ParameterBlob>, ClientError> {
        let t = self.step_counter;
        if t == 0 || !t.is_multiple_of(self.config.n_pull as u64) || t == self.last_pull_step {
            return Ok(None);
        }
        self.last_pull_step = t;
        self.pull_params()
    }

    /// Unconditional pull, counted like a cadence pull.
    pub fn pull_params(&mut self) -> Result<Option<ParameterBlob>, ClientError> {
        let cached = self.cached_params.as_ref().map_or(0, |p| p.version);
        let min_version = if self.config.version_gated_pull { cached } else { 0 };
        let started = Instant::now();
        let blob = self.conn.pull_params(min_version)?;
        self.last_pull_latency = Some(started.elapsed());
        self.counters.param_pulls += 1;
        if blob.version > cached {
            self.counters.param_updates += 1;
            self.cached_params = Some(blob.clone());
            return Ok(Some(blob));
        }
        Ok(None)
    }
}
