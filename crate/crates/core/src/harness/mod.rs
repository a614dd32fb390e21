//! Latency benchmark and toy end-to-end training on top of the SDK.

mod bench;
mod breakdown;
pub mod gridworld;
mod toy;

use std::time::Duration;

use thiserror::Error;

pub use bench::{
    run_bench, run_sweep, synthetic_experience, write_sweep_csv, BenchConfig, BenchReport, SWEEP_HEADER,
};
pub use breakdown::{emit_breakdown_plot_data, write_breakdown_csv, BREAKDOWN_HEADER};
pub use gridworld::{Action, GridSize, GridWorld};
pub use toy::{run_toy_training, write_curve_csv, CurvePoint, PriorityTrend, QTable, ToyConfig, ToyLearner, ToyReport};

use crate::client::ClientError;
use crate::server::ServerError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Server(#[from] ServerError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("worker thread panicked")]
    Panicked,
}

/// Count, mean and nearest-rank quantiles over a set of durations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LatencySummary {
    pub count: u64,
    pub mean_s: f64,
    pub p50_s: f64,
    pub p99_s: f64,
    pub total_s: f64,
}

impl LatencySummary {
    pub fn from_samples(samples: &[Duration]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut secs: Vec<f64> = samples.iter().map(Duration::as_secs_f64).collect();
        secs.sort_by(f64::total_cmp);
        let total: f64 = secs.iter().sum();
        let rank = |q: f64| {
            let r = (q * secs.len() as f64).ceil() as usize;
            secs[r.clamp(1, secs.len()) - 1]
        };
        Self {
            count: secs.len() as u64,
            mean_s: total / secs.len() as f64,
            p50_s: rank(0.5),
            p99_s: rank(0.99),
            total_s: total,
        }
    }
}
