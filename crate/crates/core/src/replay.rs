//! Domain model and math shared by every part of the system.
//!
//! Everything here is a pure function or a plain value type. Q-values arrive
//! as numbers from the caller; no model inference happens in this module.

use thiserror::Error;

/// Default floor applied to priorities so the replay never holds a zero leaf.
pub const DEFAULT_P_MIN: f64 = 1e-6;

/// Default ε of the first actor; later actors decay from it.
pub const DEFAULT_EPSILON_BASE: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

/// One state transition `(s, a, r, s')`.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: Vec<f32>,
    pub action: u32,
    pub reward: f32,
    pub next_state: Vec<f32>,
}

impl Experience {
    pub fn new(state: Vec<f32>, action: u32, reward: f32, next_state: Vec<f32>) -> Self {
        Self {
            state,
            action,
            reward,
            next_state,
        }
    }

    /// Length of the state vectors, if both agree.
    pub fn state_dim(&self) -> Option<usize> {
        (self.state.len() == self.next_state.len()).then_some(self.state.len())
    }

    /// Checks the session invariants: both state vectors have `state_dim`
    /// entries and the action is in range.
    pub fn validate(&self, state_dim: u32, action_count: u32) -> Result<(), DomainError> {
        let dim = state_dim as usize;
        if self.state.len() != dim || self.next_state.len() != dim {
            return Err(DomainError::Invalid(format!(
                "state lengths {}/{} do not match state_dim {dim}",
                self.state.len(),
                self.next_state.len()
            )));
        }
        if self.action >= action_count {
            return Err(DomainError::Invalid(format!(
                "action {} out of range for {action_count} actions",
                self.action
            )));
        }
        Ok(())
    }
}

/// Strictly positive, finite sampling priority.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Priority(f64);

impl Priority {
    pub fn new(value: f64) -> Result<Self, DomainError> {
        if value.is_finite() && value > 0.0 {
            Ok(Self(value))
        } else {
            Err(DomainError::Invalid(format!(
                "priority must be finite and > 0, got {value}"
            )))
        }
    }

    /// Raises `value` to at least `p_min`. NaN maps to `p_min`.
    pub fn clamped(value: f64, p_min: f64) -> Self {
        debug_assert!(p_min > 0.0);
        if value.is_nan() {
            Self(p_min)
        } else {
            Self(value.max(p_min).min(f64::MAX))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// A pushed batch τ with its priorities p.
#[derive(Debug, Clone, PartialEq)]
pub struct PrioritizedBatch {
    experiences: Vec<Experience>,
    priorities: Vec<Priority>,
}

impl PrioritizedBatch {
    pub fn new(experiences: Vec<Experience>, priorities: Vec<Priority>) -> Result<Self, DomainError> {
        if experiences.is_empty() {
            return Err(DomainError::Empty("prioritized batch"));
        }
        if experiences.len() != priorities.len() {
            return Err(DomainError::Invalid(format!(
                "{} experiences but {} priorities",
                experiences.len(),
                priorities.len()
            )));
        }
        Ok(Self {
            experiences,
            priorities,
        })
    }

    pub fn len(&self) -> usize {
        self.experiences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experiences.is_empty()
    }

    pub fn experiences(&self) -> &[Experience] {
        &self.experiences
    }

    pub fn priorities(&self) -> &[Priority] {
        &self.priorities
    }

    pub fn into_parts(self) -> (Vec<Experience>, Vec<Priority>) {
        (self.experiences, self.priorities)
    }
}

/// Replay memory configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayConfig {
    /// Replay memory size in experiences.
    pub capacity: u64,
    /// Priority exponent α.
    pub alpha: f64,
    pub p_min: f64,
    pub train_batch_size: u32,
    pub actor_batch_size: u32,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            capacity: 65_536,
            alpha: 0.6,
            p_min: DEFAULT_P_MIN,
            train_batch_size: 512,
            actor_batch_size: 200,
        }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(DomainError::Invalid(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.p_min > 0.0 && self.p_min.is_finite()) {
            return Err(DomainError::Invalid(format!("p_min must be > 0, got {}", self.p_min)));
        }
        if self.train_batch_size == 0 || self.capacity < self.train_batch_size as u64 {
            return Err(DomainError::Invalid(format!(
                "need capacity ({}) >= train_batch_size ({}) >= 1",
                self.capacity, self.train_batch_size
            )));
        }
        if self.actor_batch_size == 0 {
            return Err(DomainError::Invalid("actor_batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Learner-side schedule: discount rate γ, target-network refresh period and
/// actor parameter-pull period.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub gamma: f64,
    pub n_update: u32,
    pub n_pull: u32,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            n_update: 2_500,
            n_pull: 200,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(DomainError::Invalid(format!("gamma must be in [0, 1], got {}", self.gamma)));
        }
        if self.n_update == 0 || self.n_pull == 0 {
            return Err(DomainError::Invalid("n_update and n_pull must be >= 1".into()));
        }
        Ok(())
    }
}

/// TD-error priority `max(|q_current - q_previous|, p_min)`.
pub fn compute_priority(q_current: f64, q_previous: f64, p_min: f64) -> Priority {
    Priority::clamped((q_current - q_previous).abs(), p_min)
}

/// Sampling distribution `P_i = p_i^α / Σ_k p_k^α`.
///
/// Evaluated relative to the largest priority in log space so large α does
/// not overflow and the result is invariant to a common scale factor.
pub fn sampling_probabilities(priorities: &[Priority], alpha: f64) -> Result<Vec<f64>, DomainError> {
    if priorities.is_empty() {
        return Err(DomainError::Empty("priorities"));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(DomainError::Invalid(format!("alpha must be >= 0, got {alpha}")));
    }
    let logs: Vec<f64> = priorities.iter().map(|p| p.get().ln()).collect();
    let max_log = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (alpha * (l - max_log)).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Q-learning target `r + γ · max_a' Q(s', a')`.
pub fn q_target(reward: f64, gamma: f64, max_next_q: f64) -> f64 {
    reward + gamma * max_next_q
}

/// Index of the largest value; the lowest index wins ties. NaN never wins.
pub fn argmax(values: &[f64]) -> Option<usize> {
    if values.is_empty() {
        return None;
    }
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] || (values[best].is_nan() && !v.is_nan()) {
            best = i;
        }
    }
    Some(best)
}

/// ε-greedy action choice with externally supplied randomness, so callers
/// control the stream and tests are deterministic.
pub fn epsilon_greedy(
    q_values: &[f64],
    epsilon: f64,
    random_draw: f64,
    random_index: u32,
) -> Result<u32, DomainError> {
    if q_values.is_empty() {
        return Err(DomainError::Empty("q_values"));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(DomainError::Invalid(format!("epsilon must be in [0, 1], got {epsilon}")));
    }
    if random_index as usize >= q_values.len() {
        return Err(DomainError::Invalid(format!(
            "random_index {random_index} out of range for {} actions",
            q_values.len()
        )));
    }
    if random_draw < epsilon {
        Ok(random_index)
    } else {
        Ok(argmax(q_values).unwrap_or(0) as u32)
    }
}

/// Per-actor exploration rate `ε_i = base^(1 + i/(N-1))`.
///
/// A stand-in schedule; a single actor uses `base`. Override per actor when a
/// different spread is wanted.
pub fn actor_epsilon(actor_index: u32, actor_count: u32, base: f64) -> f64 {
    if actor_count <= 1 {
        return base;
    }
    let frac = actor_index as f64 / (actor_count - 1) as f64;
    base.powf(1.0 + frac)
}
