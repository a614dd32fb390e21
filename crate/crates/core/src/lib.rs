//! Networked prioritized experience replay for distributed DQN.
//!
//! The crate is split the same way the running system is:
//!
//! * [`replay`] holds the shared domain math (priorities, sampling
//!   probabilities, Q-targets, ε-greedy).
//! * [`sumtree`] is the capacity-bounded prioritized replay store.
//! * [`protocol`] is the length-prefixed binary wire format.
//! * [`server`] is the in-network node, in either topology: a shared-memory
//!   queue drained by a remote replay (mode A) or a co-located replay that
//!   serves sampled batches (mode B).
//! * [`client`] implements the actor and learner loops against the server.
//! * [`harness`] drives latency benchmarks and a toy end-to-end training run.

pub mod client;
pub mod harness;
pub mod protocol;
pub mod replay;
pub mod server;
pub mod sumtree;

pub use protocol::{ErrorCode, Message, Role, ServerMode};
pub use replay::{Experience, PrioritizedBatch, Priority, ReplayConfig};
pub use sumtree::{SampleResult, SumTree};
