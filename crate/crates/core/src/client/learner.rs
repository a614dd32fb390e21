use std::fmt::Display;
use std::net::ToSocketAddrs;
use std::thread;
use std::time::{Duration, Instant};

use bytes::Bytes;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::puller::ReplayPuller;
use super::{hello, unexpected, ClientError, Connection};
use crate::protocol::{ErrorCode, Message, Role, SampledRecord, ServerMode};
use crate::replay::{DomainError, Priority, DEFAULT_P_MIN};
use crate::sumtree::SumTree;

/// Local replay used when the server runs mode A.
#[derive(Debug, Clone)]
pub struct LocalReplayConfig {
    pub capacity: u64,
    pub alpha: f64,
    pub p_min: f64,
    /// Minimum time between drains of the server queue.
    pub pull_interval: Duration,
    pub pull_max: u32,
    pub seed: u64,
}

impl Default for LocalReplayConfig {
    fn default() -> Self {
        Self {
            capacity: 65_536,
            alpha: 0.6,
            p_min: DEFAULT_P_MIN,
            pull_interval: Duration::from_millis(100),
            pull_max: 65_536,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LearnerClientConfig {
    pub client_id: u32,
    pub train_batch_size: u32,
    pub n_update: u32,
    /// Wait between retries while the replay is empty.
    pub retry_interval: Duration,
    /// `None` waits forever.
    pub max_not_ready_retries: Option<u32>,
    /// Settings for the local replay in mode A; defaults apply when unset.
    pub local_replay: Option<LocalReplayConfig>,
}

impl Default for LearnerClientConfig {
    fn default() -> Self {
        Self {
            client_id: 0,
            train_batch_size: 512,
            n_update: 2500,
            retry_interval: Duration::from_millis(50),
            max_not_ready_retries: None,
            local_replay: None,
        }
    }
}

/// What `train_fn` hands back: the new parameter blob and one priority per
/// sampled record, in order.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: Bytes,
    pub priorities: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationReport {
    /// The successful sample request alone (local sampling in mode A).
    pub sample_latency: Duration,
    /// Whole sample phase including NOT_READY waits and mode A drains.
    pub sample_phase: Duration,
    pub train_latency: Duration,
    pub update_latency: Duration,
    pub set_latency: Duration,
    pub not_ready_retries: u32,
    pub slot_ids: Vec<u64>,
    pub applied: u32,
    pub stale: u32,
    pub param_version: u64,
    /// Mode A only: experiences drained from the server during this iteration.
    pub experiences_pulled: u64,
    pub experience_pull_latency: Duration,
}

struct LocalReplay {
    tree: SumTree,
    puller: ReplayPuller,
    rng: ChaCha8Rng,
    config: LocalReplayConfig,
    last_pull: Option<Instant>,
}

impl LocalReplay {
    fn maybe_pull(&mut self, report: &mut IterationReport) -> Result<(), ClientError> {
        if self.last_pull.is_some_and(|t| t.elapsed() < self.config.pull_interval) {
            return Ok(());
        }
        self.last_pull = Some(Instant::now());
        let (records, pull) = self.puller.pull(self.config.pull_max)?;
        report.experiences_pulled += pull.count as u64;
        report.experience_pull_latency += pull.latency;
        let p_min = self.tree.p_min();
        for rec in records {
            self.tree.insert(rec.experience, Priority::clamped(rec.priority, p_min));
        }
        Ok(())
    }

    fn sample(&mut self, k: u32) -> Result<(Vec<SampledRecord>, Duration), ClientError> {
        if self.tree.is_empty() {
            return Err(ClientError::Server {
                code: ErrorCode::NOT_READY,
                detail: "local replay is empty".into(),
            });
        }
        let started = Instant::now();
        let res = self
            .tree
            .sample_batch(k, &mut self.rng)
            .map_err(|e| ClientError::Contract(e.to_string()))?;
        let records = res
            .slot_ids
            .into_iter()
            .zip(res.probabilities)
            .zip(res.experiences)
            .map(|((slot_id, probability), experience)| SampledRecord {
                slot_id,
                probability,
                experience,
            })
            .collect();
        Ok((records, started.elapsed()))
    }
}

/// Learner side of the loop: sample, train, update priorities, set params.
pub struct LearnerClient {
    conn: Connection,
    config: LearnerClientConfig,
    local: Option<LocalReplay>,
    step_counter: u64,
    param_version_out: u64,
}

impl LearnerClient {
    pub fn connect<A: ToSocketAddrs + Clone>(
        addr: A,
        state_dim: u32,
        action_count: u32,
        config: LearnerClientConfig,
    ) -> Result<Self, ClientError> {
        if config.train_batch_size == 0 {
            return Err(DomainError::Invalid("train_batch_size must be positive".into()).into());
        }
        let conn = Connection::connect(
            addr.clone(),
            hello(Role::Learner, config.client_id, state_dim, action_count, 0),
        )?;
        let local = match conn.mode() {
            ServerMode::ColocatedReplay => None,
            ServerMode::SharedMemory => {
                let lc = config.local_replay.clone().unwrap_or_default();
                let tree = SumTree::with_alpha(lc.capacity, lc.alpha, lc.p_min)
                    .map_err(|e| ClientError::Contract(e.to_string()))?;
                let puller = ReplayPuller::connect(addr, config.client_id, state_dim, action_count)?;
                Some(LocalReplay {
                    tree,
                    puller,
                    rng: ChaCha8Rng::seed_from_u64(lc.seed),
                    config: lc,
                    last_pull: None,
                })
            }
        };
        Ok(Self {
            conn,
            config,
            local,
            step_counter: 0,
            param_version_out: 0,
        })
    }

    pub fn connection(&mut self) -> &mut Connection {
        &mut self.conn
    }

    pub fn config(&self) -> &LearnerClientConfig {
        &self.config
    }

    pub fn step_counter(&self) -> u64 {
        self.step_counter
    }

    pub fn param_version_out(&self) -> u64 {
        self.param_version_out
    }

    /// Bytes (sent, received) over every connection this learner owns.
    pub fn bytes_transferred(&mut self) -> (u64, u64) {
        let (mut sent, mut received) = (self.conn.bytes_sent(), self.conn.bytes_received());
        if let Some(local) = &mut self.local {
            let c = local.puller.connection();
            sent += c.bytes_sent();
            received += c.bytes_received();
        }
        (sent, received)
    }

    /// Experiences drained from the server so far (mode A).
    pub fn experiences_pulled(&self) -> u64 {
        self.local.as_ref().map_or(0, |l| l.puller.pulled())
    }

    /// Live experiences in the local replay (mode A).
    pub fn local_replay_len(&self) -> Option<u64> {
        self.local.as_ref().map(|l| l.tree.len())
    }

    /// True on iterations where a fixed target network should be refreshed.
    pub fn target_update_due(&self) -> bool {
        self.step_counter > 0 && self.step_counter.is_multiple_of(self.config.n_update.max(1) as u64)
    }

    /// One pass of sample, train, update priorities and set params, in that
    /// order. A `train_fn` error or a wrong number of priorities aborts the
    /// iteration before anything is sent.
    pub fn learner_iteration<F, E>(&mut self, train_fn: F) -> Result<IterationReport, ClientError>
    where
        F: FnOnce(&[SampledRecord]) -> Result<TrainOutput, E>,
        E: Display,
    {
        let mut report = IterationReport::default();

        let started = Instant::now();
        let batch = self.sample(&mut report)?;
        report.sample_phase = started.elapsed();
        report.slot_ids = batch.iter().map(|r| r.slot_id).collect();

        let started = Instant::now();
        let out = train_fn(&batch).map_err(|e| ClientError::Train(e.to_string()))?;
        report.train_latency = started.elapsed();
        if out.priorities.len() != batch.len() {
            return Err(ClientError::Contract(format!(
                "train_fn returned {} priorities for {} samples",
                out.priorities.len(),
                batch.len()
            )));
        }

        let started = Instant::now();
        let updates: Vec<(u64, f64)> = report.slot_ids.iter().copied().zip(out.priorities).collect();
        let (applied, stale) = self.update(updates)?;
        report.update_latency = started.elapsed();
        report.applied = applied;
        report.stale = stale;

        let started = Instant::now();
        let version = self.conn.set_params(self.param_version_out + 1, out.params)?;
        report.set_latency = started.elapsed();
        self.param_version_out = version;
        report.param_version = version;

        self.step_counter += 1;
        Ok(report)
    }

    fn sample(&mut self, report: &mut IterationReport) -> Result<Vec<SampledRecord>, ClientError> {
        let k = self.config.train_batch_size;
        loop {
            let attempt = match &mut self.local {
                None => self.sample_remote(k),
                Some(local) => {
                    local.maybe_pull(report)?;
                    local.sample(k)
                }
            };
            match attempt {
                Ok((records, latency)) => {
                    report.sample_latency = latency;
                    return Ok(records);
                }
                Err(e) if e.code() == Some(ErrorCode::NOT_READY) => {
                    if self
                        .config
                        .max_not_ready_retries
                        .is_some_and(|max| report.not_ready_retries >= max)
                    {
                        return Err(e);
                    }
                    report.not_ready_retries += 1;
                    thread::sleep(self.config.retry_interval);
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn sample_remote(&mut self, k: u32) -> Result<(Vec<SampledRecord>, Duration), ClientError> {
        let started = Instant::now();
        match self.conn.request(&Message::SampleReq { batch_size: k })? {
            Message::SampleResp(records) => Ok((records, started.elapsed())),
            other => Err(unexpected("SAMPLE_RESP", &other)),
        }
    }

    fn update(&mut self, updates: Vec<(u64, f64)>) -> Result<(u32, u32), ClientError> {
        match &mut self.local {
            None => match self.conn.request(&Message::UpdatePriorities(updates))? {
                Message::UpdateAck { applied, stale } => Ok((applied, stale)),
                other => Err(unexpected("UPDATE_ACK", &other)),
            },
            Some(local) => {
                let p_min = local.tree.p_min();
                let (mut applied, mut stale) = (0, 0);
                for (slot, p) in updates {
                    match local.tree.update_priority(slot, Priority::clamped(p, p_min)) {
                        Ok(()) => applied += 1,
                        Err(_) => stale += 1,
                    }
                }
                Ok((applied, stale))
            }
        }
    }
}
