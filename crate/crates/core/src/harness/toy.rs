//! Tabular Q-learning on the grid world through the real server and SDK.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use bytes::Bytes;
use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gridworld::{decode_one_hot, Action, GridSize, GridWorld, ACTION_COUNT};
use super::HarnessError;
use crate::client::{ActorClient, ActorConfig, LearnerClient, LearnerClientConfig, TrainOutput};
use crate::protocol::{SampledRecord, ServerMode};
use crate::replay::{actor_epsilon, compute_priority, epsilon_greedy, q_target, DEFAULT_EPSILON_BASE, DEFAULT_P_MIN};
use crate::server::{Server, ServerConfig};
use crate::Experience;

/// Dense `states × actions` table, serialized as little-endian f32, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    states: u32,
    actions: u32,
    values: Vec<f32>,
}

impl QTable {
    pub fn zeros(states: u32, actions: u32) -> Self {
        Self {
            states,
            actions,
            values: vec![0.0; (states * actions) as usize],
        }
    }

    pub fn states(&self) -> u32 {
        self.states
    }

    pub fn actions(&self) -> u32 {
        self.actions
    }

    pub fn get(&self, s: u32, a: u32) -> f32 {
        self.values[(s * self.actions + a) as usize]
    }

    pub fn set(&mut self, s: u32, a: u32, v: f32) {
        self.values[(s * self.actions + a) as usize] = v;
    }

    pub fn row(&self, s: u32) -> Vec<f64> {
        let i = (s * self.actions) as usize;
        self.values[i..i + self.actions as usize]
            .iter()
            .map(|&v| v as f64)
            .collect()
    }

    pub fn max(&self, s: u32) -> f64 {
        self.row(s).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn greedy(&self, s: u32) -> u32 {
        crate::replay::argmax(&self.row(s)).unwrap_or(0) as u32
    }

    pub fn to_bytes(&self) -> Bytes {
        let mut out = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.into()
    }

    pub fn from_bytes(bytes: &[u8], states: u32, actions: u32) -> Result<Self, HarnessError> {
        let n = (states * actions) as usize;
        if bytes.len() != n * 4 {
            return Err(HarnessError::Config(format!(
                "parameter blob has {} bytes, expected {}",
                bytes.len(),
                n * 4
            )));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self {
            states,
            actions,
            values,
        })
    }

    /// Follows the greedy policy from the start cell. Returns the number of
    /// steps taken and whether the goal was reached within `limit`.
    pub fn greedy_rollout(&self, world: &GridWorld, limit: u32) -> (u32, bool) {
        let mut s = world.index(world.start);
        for t in 1..=limit {
            let a = Action::from_index(self.greedy(s)).unwrap_or(Action::Up);
            s = world.transition(s, a).0;
            if s == world.goal_state() {
                return (t, true);
            }
        }
        (limit, false)
    }
}

/// First and last |TD| returned for each (state, action) key trained at
/// least twice.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PriorityTrend {
    pub tracked_keys: usize,
    pub decreased_keys: usize,
    pub mean_first: f64,
    pub mean_last: f64,
}

/// The learner's model: online and fixed-target tables plus priority
/// bookkeeping.
#[derive(Debug, Clone)]
pub struct ToyLearner {
    online: QTable,
    target: QTable,
    gamma: f64,
    learning_rate: f64,
    n_update: u32,
    p_min: f64,
    iterations: u64,
    history: HashMap<(u32, u32), (f64, f64, u32)>,
}

impl ToyLearner {
    pub fn new(states: u32, actions: u32, gamma: f64, learning_rate: f64, n_update: u32) -> Self {
        let online = QTable::zeros(states, actions);
        Self {
            target: online.clone(),
            online,
            gamma,
            learning_rate,
            n_update: n_update.max(1),
            p_min: DEFAULT_P_MIN,
            iterations: 0,
            history: HashMap::new(),
        }
    }

    pub fn q(&self) -> &QTable {
        &self.online
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    fn decode(&self, rec: &SampledRecord) -> Result<(u32, u32, f64, u32), HarnessError> {
        let bad = || HarnessError::Config(format!("slot {} is not a one-hot transition", rec.slot_id));
        let e = &rec.experience;
        let s = decode_one_hot(&e.state).ok_or_else(bad)?;
        let s2 = decode_one_hot(&e.next_state).ok_or_else(bad)?;
        if e.action >= self.online.actions {
            return Err(bad());
        }
        Ok((s, e.action, e.reward as f64, s2))
    }

    /// Tabular update toward `r + γ max_a' Q_target(s', a')`, then fresh
    /// |TD| priorities against the updated table.
    pub fn train(&mut self, batch: &[SampledRecord]) -> Result<TrainOutput, HarnessError> {
        let decoded = batch
            .iter()
            .map(|r| self.decode(r))
            .collect::<Result<Vec<_>, _>>()?;
        for &(s, a, r, s2) in &decoded {
            let target = q_target(r, self.gamma, self.target.max(s2));
            let q = self.online.get(s, a) as f64;
            self.online.set(s, a, (q + self.learning_rate * (target - q)) as f32);
        }
        let priorities: Vec<f64> = decoded
            .iter()
            .map(|&(s, a, r, s2)| {
                let td = compute_priority(
                    q_target(r, self.gamma, self.online.max(s2)),
                    self.online.get(s, a) as f64,
                    self.p_min,
                )
                .get();
                let entry = self.history.entry((s, a)).or_insert((td, td, 0));
                entry.1 = td;
                entry.2 += 1;
                td
            })
            .collect();
        self.iterations += 1;
        if self.iterations.is_multiple_of(self.n_update as u64) {
            self.target = self.online.clone();
        }
        Ok(TrainOutput {
            params: self.online.to_bytes(),
            priorities,
        })
    }

    pub fn priority_trend(&self) -> PriorityTrend {
        let seen: Vec<(f64, f64)> = self
            .history
            .values()
            .filter(|(_, _, n)| *n >= 2)
            .map(|&(first, last, _)| (first, last))
            .collect();
        if seen.is_empty() {
            return PriorityTrend::default();
        }
        let n = seen.len() as f64;
        PriorityTrend {
            tracked_keys: seen.len(),
            decreased_keys: seen.iter().filter(|(f, l)| l < f).count(),
            mean_first: seen.iter().map(|p| p.0).sum::<f64>() / n,
            mean_last: seen.iter().map(|p| p.1).sum::<f64>() / n,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyConfig {
    pub grid: GridSize,
    pub actors: u32,
    pub seed: u64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub train_batch_size: u32,
    pub n_update: u32,
    pub actor_batch_size: u32,
    pub n_pull: u32,
    pub epsilon_base: f64,
    /// Environment steps per actor; actors stop early once training ends.
    pub actor_steps: u64,
    pub max_iterations: u64,
    pub eval_every: u64,
    /// End as soon as the greedy policy is optimal; otherwise train for the
    /// whole iteration budget.
    pub stop_on_success: bool,
    pub time_budget: Duration,
    pub replay_capacity: u64,
    pub alpha: f64,
    pub step_penalty: f32,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            grid: GridSize { width: 5, height: 5 },
            actors: 2,
            seed: 42,
            gamma: 0.95,
            learning_rate: 1.0,
            train_batch_size: 32,
            n_update: 100,
            actor_batch_size: 50,
            n_pull: 50,
            epsilon_base: DEFAULT_EPSILON_BASE,
            actor_steps: u64::MAX,
            max_iterations: 50_000,
            eval_every: 50,
            stop_on_success: true,
            time_budget: Duration::from_secs(300),
            replay_capacity: 65_536,
            alpha: 0.6,
            step_penalty: -0.01,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if !(1..=64).contains(&self.actors) {
            return bad("actors must be in 1..=64");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must be in [0, 1]");
        }
        if self.train_batch_size == 0 || self.actor_batch_size == 0 || self.n_pull == 0 || self.eval_every == 0 {
            return bad("batch sizes, n_pull and eval_every must be positive");
        }
        Ok(())
    }

    fn world(&self) -> GridWorld {
        let mut w = GridWorld::new(self.grid);
        w.step_penalty = self.step_penalty;
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub iteration: u64,
    pub elapsed_s: f64,
    pub greedy_steps: u32,
    pub reached_goal: bool,
    pub optimal_steps: u32,
    pub mean_priority: f64,
    pub replay_live: u64,
}

#[derive(Debug, Clone)]
pub struct ToyReport {
    pub success: bool,
    /// Iteration of the first optimal evaluation.
    pub first_success: Option<u64>,
    pub iterations: u64,
    pub optimal_steps: u32,
    pub greedy_steps: u32,
    pub curve: Vec<CurvePoint>,
    pub priority_trend: PriorityTrend,
    pub experiences_recorded: u64,
    pub experiences_added: u64,
    pub wall: Duration,
    pub q: QTable,
}

pub const CURVE_HEADER: [&str; 7] = [
    "iteration",
    "elapsed_s",
    "greedy_steps",
    "reached_goal",
    "optimal_steps",
    "mean_priority",
    "replay_live",
];

pub fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CURVE_HEADER)?;
    for p in curve {
        w.write_record([
            p.iteration.to_string(),
            format!("{:.6}", p.elapsed_s),
            p.greedy_steps.to_string(),
            u8::from(p.reached_goal).to_string(),
            p.optimal_steps.to_string(),
            format!("{:.9}", p.mean_priority),
            p.replay_live.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn run_actor(
    addr: SocketAddr,
    index: u32,
    config: &ToyConfig,
    stop: &AtomicBool,
) -> Result<u64, HarnessError> {
    let mut world = config.world();
    let states = world.state_dim();
    let epsilon = actor_epsilon(index, config.actors, config.epsilon_base);
    let mut actor = ActorClient::connect(
        addr,
        states,
        ACTION_COUNT,
        ActorConfig {
            client_id: index,
            actor_batch_size: config.actor_batch_size,
            n_pull: config.n_pull,
            epsilon,
            backoff_seed: config.seed.wrapping_add(index as u64),
            ..ActorConfig::default()
        },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(1_000_003).wrapping_add(index as u64));
    let mut q = QTable::zeros(states, ACTION_COUNT);
    if let Some(blob) = actor.pull_params()? {
        q = QTable::from_bytes(&blob.bytes, states, ACTION_COUNT)?;
    }
    world.reset();
    for _ in 0..config.actor_steps {
        if stop.load(Ordering::Relaxed) {
            break;
        }
        let s = world.state();
        let a = epsilon_greedy(&q.row(s), epsilon, rng.gen(), rng.gen_range(0..ACTION_COUNT))
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let step = world.step(Action::from_index(a).unwrap_or(Action::Up));
        let priority = compute_priority(
            q_target(step.reward as f64, config.gamma, q.max(step.next_state)),
            q.get(s, a) as f64,
            DEFAULT_P_MIN,
        );
        let exp = Experience::new(world.one_hot(s), a, step.reward, world.one_hot(step.next_state));
        actor.actor_record(exp, priority)?;
        if let Some(blob) = actor.actor_maybe_pull_params()? {
            q = QTable::from_bytes(&blob.bytes, states, ACTION_COUNT)?;
        }
        if step.done {
            world.reset();
        }
    }
    actor.flush()?;
    Ok(actor.counters().recorded)
}

/// Trains a tabular Q function through an in-process mode B server until
/// the greedy policy walks a shortest path, or the budget runs out.
pub fn run_toy_training(config: &ToyConfig) -> Result<ToyReport, HarnessError> {
    config.validate()?;
    let world = config.world();
    let states = world.state_dim();
    let server = Server::start(ServerConfig {
        mode: ServerMode::ColocatedReplay,
        capacity: config.replay_capacity,
        alpha: config.alpha,
        state_dim: states,
        action_count: ACTION_COUNT,
        seed: config.seed,
        ..ServerConfig::default()
    })?;
    let addr = server.local_addr();

    let mut learner = LearnerClient::connect(
        addr,
        states,
        ACTION_COUNT,
        LearnerClientConfig {
            train_batch_size: config.train_batch_size,
            n_update: config.n_update,
            retry_interval: Duration::from_millis(5),
            ..LearnerClientConfig::default()
        },
    )?;
    let mut model = ToyLearner::new(states, ACTION_COUNT, config.gamma, config.learning_rate, config.n_update);
    learner.connection().set_params(0, model.q().to_bytes())?;

    let stop = Arc::new(AtomicBool::new(false));
    let actors: Vec<_> = (0..config.actors)
        .map(|i| {
            let stop = Arc::clone(&stop);
            let config = config.clone();
            thread::spawn(move || run_actor(addr, i, &config, &stop))
        })
        .collect();

    let started = Instant::now();
    let optimal = world.optimal_steps();
    let limit = states * 2;
    let mut curve = Vec::new();
    let mut success = false;
    let mut first_success = None;
    let mut iterations = 0;
    let mut priority_sum = 0.0;
    let mut priority_count = 0usize;
    let mut outcome = Ok(());
    while iterations < config.max_iterations && started.elapsed() < config.time_budget {
        let result = learner.learner_iteration(|batch| {
            let out = model.train(batch)?;
            priority_sum += out.priorities.iter().sum::<f64>();
            priority_count += out.priorities.len();
            Ok::<_, HarnessError>(out)
        });
        if let Err(e) = result {
            outcome = Err(e.into());
            break;
        }
        iterations += 1;
        if iterations % config.eval_every == 0 {
            let (steps, reached) = model.q().greedy_rollout(&world, limit);
            curve.push(CurvePoint {
                iteration: iterations,
                elapsed_s: started.elapsed().as_secs_f64(),
                greedy_steps: steps,
                reached_goal: reached,
                optimal_steps: optimal,
                mean_priority: priority_sum / priority_count.max(1) as f64,
                replay_live: server.stats().replay_live,
            });
            priority_sum = 0.0;
            priority_count = 0;
            if reached && steps == optimal && !success {
                success = true;
                first_success = Some(iterations);
                if config.stop_on_success {
                    break;
                }
            }
        }
    }
    stop.store(true, Ordering::Relaxed);
    let mut recorded = 0;
    for h in actors {
        match h.join() {
            Ok(Ok(n)) => recorded += n,
            Ok(Err(e)) => {
                debug!("actor stopped with error: {e}");
                if outcome.is_ok() {
                    outcome = Err(e);
                }
            }
            Err(_) => outcome = Err(HarnessError::Panicked),
        }
    }
    outcome?;
    server.sync_replay();
    let stats = server.shutdown()?;
    let (greedy_steps, _) = model.q().greedy_rollout(&world, limit);
    info!("toy training: success={success} after {iterations} iterations");
    Ok(ToyReport {
        success,
        first_success,
        iterations,
        optimal_steps: optimal,
        greedy_steps,
        curve,
        priority_trend: model.priority_trend(),
        experiences_recorded: recorded,
        experiences_added: stats.experiences_added,
        wall: started.elapsed(),
        q: model.q().clone(),
    })
}
