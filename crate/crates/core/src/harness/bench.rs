//! Synthetic-workload latency benchmark.
//!
//! Actors push random, correctly sized experiences as fast as they can and
//! pull parameters on the usual cadence; one learner loops sample, train,
//! update and set with a no-op model. Latency is request-send to
//! response-decode on a monotonic clock.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Barrier};
use std::thread;
use std::time::{Duration, Instant};

use bytes::Bytes;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{HarnessError, LatencySummary};
use crate::client::{
    ActorClient, ActorConfig, Connection, LearnerClient, LearnerClientConfig, LocalReplayConfig, TrainOutput,
};
use crate::protocol::{ErrorCode, Hello, Role, ServerMode, StatsSnapshot};
use crate::replay::{actor_epsilon, compute_priority, DEFAULT_EPSILON_BASE, DEFAULT_P_MIN};
use crate::server::{Server, ServerConfig, ServerHandle};
use crate::{Experience, Priority};

/// Input size of the reference workload: four stacked 84×84 frames.
pub const PAPER_STATE_DIM: u32 = 4 * 84 * 84;
pub const PAPER_PARAM_BYTES: usize = 13 << 20;
pub const SMALL_STATE_DIM: u32 = 64;
pub const SMALL_PARAM_BYTES: usize = 256 << 10;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub mode: ServerMode,
    pub actor_count: u32,
    pub state_dim: u32,
    pub action_count: u32,
    pub actor_batch_size: u32,
    pub train_batch_size: u32,
    pub replay_capacity: u64,
    pub param_blob_bytes: usize,
    pub n_pull: u32,
    /// Environment steps per actor.
    pub steps_per_actor: u64,
    pub seed: u64,
    /// External server; `None` starts one in-process per run.
    pub server: Option<SocketAddr>,
    pub queue_batches: usize,
    pub learner: bool,
    /// Mode A drain cadence of the learner's local replay.
    pub experience_pull_interval: Duration,
    /// Injected per-step actor work, for calibrating the breakdown.
    pub actor_compute_delay: Duration,
    pub learner_train_delay: Duration,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            mode: ServerMode::ColocatedReplay,
            actor_count: 1,
            state_dim: PAPER_STATE_DIM,
            action_count: 4,
            actor_batch_size: 200,
            train_batch_size: 512,
            replay_capacity: 65_536,
            param_blob_bytes: PAPER_PARAM_BYTES,
            n_pull: 200,
            // every 200-step batch is ~45 MB here, so keep the budget short
            steps_per_actor: 600,
            seed: 42,
            server: None,
            queue_batches: 64,
            learner: true,
            experience_pull_interval: Duration::from_millis(100),
            actor_compute_delay: Duration::ZERO,
            learner_train_delay: Duration::ZERO,
        }
    }
}

impl BenchConfig {
    /// CI-sized workload.
    pub fn small() -> Self {
        Self {
            state_dim: SMALL_STATE_DIM,
            param_blob_bytes: SMALL_PARAM_BYTES,
            steps_per_actor: 20_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.actor_count == 0 {
            return bad("actor_count must be at least 1");
        }
        if self.state_dim == 0 || self.action_count == 0 {
            return bad("state_dim and action_count must be positive");
        }
        if self.actor_batch_size == 0 || self.train_batch_size == 0 || self.n_pull == 0 {
            return bad("batch sizes and n_pull must be positive");
        }
        if self.replay_capacity == 0 || self.queue_batches == 0 {
            return bad("replay_capacity and queue_batches must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    pub mode: Option<ServerMode>,
    pub actor_count: u32,
    pub state_dim: u32,
    pub push: LatencySummary,
    pub per_actor_push: Vec<LatencySummary>,
    pub actor_pull: LatencySummary,
    pub learner_sample: LatencySummary,
    pub learner_update: LatencySummary,
    pub learner_set: LatencySummary,
    /// Mode A: learner-side drains of the server queue.
    pub experience_pull: LatencySummary,
    pub experiences_recorded: u64,
    pub experiences_pushed: u64,
    pub experiences_pulled: u64,
    pub push_retries: u64,
    pub learner_iterations: u64,
    pub not_ready_retries: u64,
    /// Slowest actor's wall time; throughput is measured over it.
    pub wall_s: f64,
    pub push_throughput: f64,
    pub experiences_pulled_per_s: f64,
    pub actor_bytes_out: u64,
    pub actor_bytes_in: u64,
    pub learner_bytes_out: u64,
    pub learner_bytes_in: u64,
    /// Mean per actor.
    pub actor_wall_s: f64,
    pub actor_compute_s: f64,
    pub actor_push_s: f64,
    pub actor_pull_s: f64,
    pub learner_wall_s: f64,
    pub learner_compute_s: f64,
    pub learner_experience_s: f64,
    pub learner_set_s: f64,
    /// Server counters accumulated during this run.
    pub server: StatsSnapshot,
    /// Hash of each actor's generated experience stream, in actor order.
    pub stream_digests: Vec<u64>,
    /// First slot ids sampled by the learner, for determinism checks.
    pub first_sample_ids: Vec<u64>,
}

impl BenchReport {
    pub fn mode_letter(&self) -> char {
        self.mode.map_or('?', ServerMode::letter)
    }

    /// Named values emitted as CSV rows, identical for both modes.
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        let mut out = Vec::new();
        let mut lat = |name: [&'static str; 4], s: &LatencySummary| {
            out.push((name[0], s.count as f64));
            out.push((name[1], s.mean_s));
            out.push((name[2], s.p50_s));
            out.push((name[3], s.p99_s));
        };
        lat(
            ["push_count", "push_latency_mean_s", "push_latency_p50_s", "push_latency_p99_s"],
            &self.push,
        );
        lat(
            [
                "pull_params_count",
                "pull_params_latency_mean_s",
                "pull_params_latency_p50_s",
                "pull_params_latency_p99_s",
            ],
            &self.actor_pull,
        );
        lat(
            [
                "set_params_count",
                "set_params_latency_mean_s",
                "set_params_latency_p50_s",
                "set_params_latency_p99_s",
            ],
            &self.learner_set,
        );
        lat(
            ["sample_count", "sample_latency_mean_s", "sample_latency_p50_s", "sample_latency_p99_s"],
            &self.learner_sample,
        );
        lat(
            [
                "update_priorities_count",
                "update_priorities_latency_mean_s",
                "update_priorities_latency_p50_s",
                "update_priorities_latency_p99_s",
            ],
            &self.learner_update,
        );
        lat(
            [
                "pull_experiences_count",
                "pull_experiences_latency_mean_s",
                "pull_experiences_latency_p50_s",
                "pull_experiences_latency_p99_s",
            ],
            &self.experience_pull,
        );
        out.extend([
            ("push_throughput_exp_per_s", self.push_throughput),
            ("experiences_pulled_per_s", self.experiences_pulled_per_s),
            ("experiences_recorded", self.experiences_recorded as f64),
            ("experiences_pushed", self.experiences_pushed as f64),
            ("experiences_pulled", self.experiences_pulled as f64),
            ("push_retries", self.push_retries as f64),
            ("learner_iterations", self.learner_iterations as f64),
            ("wall_s", self.wall_s),
            ("actor_bytes_out", self.actor_bytes_out as f64),
            ("actor_bytes_in", self.actor_bytes_in as f64),
            ("learner_bytes_out", self.learner_bytes_out as f64),
            ("learner_bytes_in", self.learner_bytes_in as f64),
            ("server_experiences_added", self.server.experiences_added as f64),
            ("server_experiences_sampled", self.server.experiences_sampled as f64),
            ("server_experiences_drained", self.server.experiences_drained as f64),
            ("server_sampled_record_bytes_out", self.server.sampled_record_bytes_out as f64),
            ("server_drained_record_bytes_out", self.server.drained_record_bytes_out as f64),
            ("server_bytes_in", self.server.bytes_in as f64),
            ("server_bytes_out", self.server.bytes_out as f64),
            ("actor_compute_s", self.actor_compute_s),
            ("actor_push_s", self.actor_push_s),
            ("actor_pull_s", self.actor_pull_s),
            ("learner_compute_s", self.learner_compute_s),
            ("learner_experience_s", self.learner_experience_s),
            ("learner_set_s", self.learner_set_s),
        ]);
        out
    }
}

/// One random transition of the given shape and its TD-style priority.
pub fn synthetic_experience<R: Rng + ?Sized>(rng: &mut R, state_dim: u32, action_count: u32) -> (Experience, Priority) {
    let state: Vec<f32> = (0..state_dim).map(|_| rng.gen()).collect();
    let next_state: Vec<f32> = (0..state_dim).map(|_| rng.gen()).collect();
    let action = rng.gen_range(0..action_count);
    let reward = rng.gen_range(-1.0f32..1.0);
    let priority = compute_priority(rng.gen(), rng.gen(), DEFAULT_P_MIN);
    (Experience::new(state, action, reward, next_state), priority)
}

fn digest(h: &mut DefaultHasher, e: &Experience, p: Priority) {
    for v in e.state.iter().chain(&e.next_state) {
        v.to_bits().hash(h);
    }
    e.action.hash(h);
    e.reward.to_bits().hash(h);
    p.get().to_bits().hash(h);
}

#[derive(Debug, Default)]
struct ActorOutcome {
    push: Vec<Duration>,
    pull: Vec<Duration>,
    push_time: Duration,
    pull_time: Duration,
    wall: Duration,
    recorded: u64,
    pushed: u64,
    retries: u64,
    bytes_out: u64,
    bytes_in: u64,
    digest: u64,
}

fn run_actor(config: &BenchConfig, addr: SocketAddr, index: u32, start: &Barrier) -> Result<ActorOutcome, HarnessError> {
    let connected = ActorClient::connect(
        addr,
        config.state_dim,
        config.action_count,
        ActorConfig {
            client_id: index,
            actor_batch_size: config.actor_batch_size,
            n_pull: config.n_pull,
            epsilon: actor_epsilon(index, config.actor_count, DEFAULT_EPSILON_BASE),
            backoff_seed: config.seed.wrapping_add(index as u64),
            max_push_attempts: Some(64),
            ..ActorConfig::default()
        },
    );
    // reach the barrier even on failure so the other parties are released
    start.wait();
    let mut actor = connected?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ ((index as u64 + 1) << 32));
    let mut hasher = DefaultHasher::new();
    let mut out = ActorOutcome::default();
    let begin = Instant::now();
    for _ in 0..config.steps_per_actor {
        let (exp, priority) = synthetic_experience(&mut rng, config.state_dim, config.action_count);
        digest(&mut hasher, &exp, priority);
        if !config.actor_compute_delay.is_zero() {
            thread::sleep(config.actor_compute_delay);
        }
        let t = Instant::now();
        if let Some(report) = actor.actor_record(exp, priority)? {
            out.push_time += t.elapsed();
            out.push.push(report.latency);
        }
        let pulls = actor.counters().param_pulls;
        let t = Instant::now();
        actor.actor_maybe_pull_params()?;
        if actor.counters().param_pulls > pulls {
            out.pull_time += t.elapsed();
            out.pull.extend(actor.last_pull_latency());
        }
    }
    out.wall = begin.elapsed();
    let counters = actor.counters();
    out.recorded = counters.recorded;
    out.pushed = counters.pushed;
    out.retries = counters.push_retries;
    let conn = actor.connection();
    out.bytes_out = conn.bytes_sent();
    out.bytes_in = conn.bytes_received();
    out.digest = hasher.finish();
    Ok(out)
}

#[derive(Debug, Default)]
struct LearnerOutcome {
    sample: Vec<Duration>,
    update: Vec<Duration>,
    set: Vec<Duration>,
    experience_pull: Vec<Duration>,
    experience_time: Duration,
    set_time: Duration,
    wall: Duration,
    iterations: u64,
    not_ready: u64,
    pulled: u64,
    bytes_out: u64,
    bytes_in: u64,
    first_ids: Vec<u64>,
}

fn run_learner(
    config: &BenchConfig,
    mut learner: LearnerClient,
    blob: Bytes,
    start: &Barrier,
    done: &AtomicBool,
) -> Result<LearnerOutcome, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x1ea4));
    let mut out = LearnerOutcome::default();
    start.wait();
    let begin = Instant::now();
    while !done.load(Ordering::Relaxed) {
        let delay = config.learner_train_delay;
        let attempt = Instant::now();
        let result = learner.learner_iteration(|batch| {
            if !delay.is_zero() {
                thread::sleep(delay);
            }
            let priorities = batch.iter().map(|_| rng.gen::<f64>() + DEFAULT_P_MIN).collect();
            Ok::<_, HarnessError>(TrainOutput {
                params: blob.clone(),
                priorities,
            })
        });
        match result {
            Ok(r) => {
                if out.first_ids.is_empty() {
                    out.first_ids = r.slot_ids.clone();
                }
                out.sample.push(r.sample_latency);
                out.update.push(r.update_latency);
                out.set.push(r.set_latency);
                if r.experiences_pulled > 0 || !r.experience_pull_latency.is_zero() {
                    out.experience_pull.push(r.experience_pull_latency);
                }
                out.experience_time += r.sample_phase + r.update_latency;
                out.set_time += r.set_latency;
                out.not_ready += r.not_ready_retries as u64;
                out.iterations += 1;
            }
            Err(e) if e.code() == Some(ErrorCode::NOT_READY) => {
                out.not_ready += 1;
                thread::sleep(learner.config().retry_interval);
                out.experience_time += attempt.elapsed();
            }
            Err(e) => return Err(e.into()),
        }
    }
    out.wall = begin.elapsed();
    out.pulled = learner.experiences_pulled();
    (out.bytes_out, out.bytes_in) = learner.bytes_transferred();
    Ok(out)
}

fn delta(after: &StatsSnapshot, before: &StatsSnapshot) -> StatsSnapshot {
    let a = after.fields();
    let b = before.fields();
    let mut v = [0u64; StatsSnapshot::FIELD_COUNT];
    for (i, slot) in v.iter_mut().enumerate() {
        *slot = a[i].1.saturating_sub(b[i].1);
    }
    // gauges are reported as-is
    let mut d = StatsSnapshot::from_values(v);
    d.queue_depth = after.queue_depth;
    d.queued_experiences = after.queued_experiences;
    d.queue_high_water = after.queue_high_water;
    d.replay_live = after.replay_live;
    d
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Runs one benchmark point and returns its report.
pub fn run_bench(config: &BenchConfig) -> Result<BenchReport, HarnessError> {
    config.validate()?;
    let spawned: Option<ServerHandle> = match config.server {
        Some(_) => None,
        None => Some(Server::start(ServerConfig {
            mode: config.mode,
            capacity: config.replay_capacity,
            queue_batches: config.queue_batches,
            state_dim: config.state_dim,
            action_count: config.action_count,
            seed: config.seed,
            ..ServerConfig::default()
        })?),
    };
    let addr = match (&spawned, config.server) {
        (Some(h), _) => h.local_addr(),
        (None, Some(a)) => a,
        (None, None) => unreachable!(),
    };
    let mut probe = Connection::connect_with_retry(
        addr,
        Hello {
            role: Role::Learner,
            client_id: u32::MAX,
            state_dim: config.state_dim,
            action_count: config.action_count,
            flags: 0,
        },
        Duration::from_secs(10),
    )
    .map_err(|e| HarnessError::Config(format!("server {addr} unreachable: {e}")))?;
    if probe.mode() != config.mode {
        return Err(HarnessError::Config(format!(
            "server runs mode {}, bench asked for {}",
            probe.mode(),
            config.mode
        )));
    }
    let before = probe.stats()?;

    let mut blob = vec![0u8; config.param_blob_bytes];
    ChaCha8Rng::seed_from_u64(config.seed).fill(&mut blob[..]);
    let blob = Bytes::from(blob);
    let learner = if config.learner {
        let mut l = LearnerClient::connect(
            addr,
            config.state_dim,
            config.action_count,
            LearnerClientConfig {
                train_batch_size: config.train_batch_size,
                max_not_ready_retries: Some(0),
                retry_interval: Duration::from_millis(10),
                local_replay: Some(LocalReplayConfig {
                    capacity: config.replay_capacity,
                    pull_interval: config.experience_pull_interval,
                    seed: config.seed,
                    ..LocalReplayConfig::default()
                }),
                ..LearnerClientConfig::default()
            },
        )?;
        l.connection().set_params(0, blob.clone())?;
        Some(l)
    } else {
        probe.set_params(0, blob.clone()).ok();
        None
    };

    let parties = config.actor_count as usize + usize::from(learner.is_some());
    let start = Arc::new(Barrier::new(parties));
    let done = Arc::new(AtomicBool::new(false));
    let learner_handle = learner.map(|l| {
        let (config, start, done, blob) = (config.clone(), Arc::clone(&start), Arc::clone(&done), blob.clone());
        thread::spawn(move || run_learner(&config, l, blob, &start, &done))
    });
    let actor_handles: Vec<_> = (0..config.actor_count)
        .map(|i| {
            let (config, start) = (config.clone(), Arc::clone(&start));
            thread::spawn(move || run_actor(&config, addr, i, &start))
        })
        .collect();
    let mut actors = Vec::new();
    let mut failure = None;
    for h in actor_handles {
        match h.join() {
            Ok(Ok(a)) => actors.push(a),
            Ok(Err(e)) => failure = failure.or(Some(e)),
            Err(_) => failure = failure.or(Some(HarnessError::Panicked)),
        }
    }
    done.store(true, Ordering::Relaxed);
    let learner = match learner_handle.map(|h| h.join()) {
        None => LearnerOutcome::default(),
        Some(Ok(Ok(l))) => l,
        Some(Ok(Err(e))) => return Err(failure.unwrap_or(e)),
        Some(Err(_)) => return Err(HarnessError::Panicked),
    };
    if let Some(e) = failure {
        return Err(e);
    }

    let after = match &spawned {
        Some(h) => {
            h.sync_replay();
            h.stats()
        }
        None => {
            let deadline = Instant::now() + Duration::from_secs(5);
            loop {
                let s = probe.stats()?;
                if (config.mode == ServerMode::SharedMemory || s.queued_experiences == 0) || Instant::now() > deadline {
                    break s;
                }
                thread::sleep(Duration::from_millis(10));
            }
        }
    };
    let server = delta(&after, &before);
    drop(probe);
    if let Some(h) = spawned {
        h.shutdown()?;
    }

    let all_push: Vec<Duration> = actors.iter().flat_map(|a| a.push.iter().copied()).collect();
    let all_pull: Vec<Duration> = actors.iter().flat_map(|a| a.pull.iter().copied()).collect();
    let wall_s = actors.iter().map(|a| a.wall.as_secs_f64()).fold(0.0, f64::max);
    let pushed: u64 = actors.iter().map(|a| a.pushed).sum();
    let learner_wall_s = learner.wall.as_secs_f64();
    let learner_experience_s = learner.experience_time.as_secs_f64();
    let learner_set_s = learner.set_time.as_secs_f64();
    Ok(BenchReport {
        mode: Some(config.mode),
        actor_count: config.actor_count,
        state_dim: config.state_dim,
        push: LatencySummary::from_samples(&all_push),
        per_actor_push: actors.iter().map(|a| LatencySummary::from_samples(&a.push)).collect(),
        actor_pull: LatencySummary::from_samples(&all_pull),
        learner_sample: LatencySummary::from_samples(&learner.sample),
        learner_update: LatencySummary::from_samples(&learner.update),
        learner_set: LatencySummary::from_samples(&learner.set),
        experience_pull: LatencySummary::from_samples(&learner.experience_pull),
        experiences_recorded: actors.iter().map(|a| a.recorded).sum(),
        experiences_pushed: pushed,
        experiences_pulled: learner.pulled,
        push_retries: actors.iter().map(|a| a.retries).sum(),
        learner_iterations: learner.iterations,
        not_ready_retries: learner.not_ready,
        wall_s,
        push_throughput: if wall_s > 0.0 { pushed as f64 / wall_s } else { 0.0 },
        experiences_pulled_per_s: if learner_wall_s > 0.0 {
            learner.pulled as f64 / learner_wall_s
        } else {
            0.0
        },
        actor_bytes_out: actors.iter().map(|a| a.bytes_out).sum(),
        actor_bytes_in: actors.iter().map(|a| a.bytes_in).sum(),
        learner_bytes_out: learner.bytes_out,
        learner_bytes_in: learner.bytes_in,
        actor_wall_s: mean(actors.iter().map(|a| a.wall.as_secs_f64())),
        actor_compute_s: mean(
            actors
                .iter()
                .map(|a| (a.wall.saturating_sub(a.push_time + a.pull_time)).as_secs_f64()),
        ),
        actor_push_s: mean(actors.iter().map(|a| a.push_time.as_secs_f64())),
        actor_pull_s: mean(actors.iter().map(|a| a.pull_time.as_secs_f64())),
        learner_wall_s,
        learner_compute_s: (learner_wall_s - learner_experience_s - learner_set_s).max(0.0),
        learner_experience_s,
        learner_set_s,
        server,
        stream_digests: actors.iter().map(|a| a.digest).collect(),
        first_sample_ids: learner.first_ids,
    })
}

/// One run per actor count, each against a fresh server unless an external
/// one is configured.
pub fn run_sweep(base: &BenchConfig, actor_counts: &[u32]) -> Result<Vec<BenchReport>, HarnessError> {
    actor_counts
        .iter()
        .map(|&n| {
            run_bench(&BenchConfig {
                actor_count: n,
                ..base.clone()
            })
        })
        .collect()
}

pub const SWEEP_HEADER: [&str; 4] = ["mode", "actor_count", "metric", "value"];

/// One row per (metric, actor count).
pub fn write_sweep_csv<W: std::io::Write>(out: W, reports: &[BenchReport]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in reports {
        let mode = r.mode_letter().to_string();
        let actors = r.actor_count.to_string();
        for (metric, value) in r.metrics() {
            w.write_record([mode.as_str(), actors.as_str(), metric, &value.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn create_csv(path: &Path) -> Result<std::fs::File, HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(std::fs::File::create(path)?)
}
