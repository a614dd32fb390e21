use std::io;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use crate::protocol::StatsSnapshot;

const BUCKETS_PER_DECADE: usize = 10;
const DECADES: usize = 7; // 1 µs .. 10 s
const BOUNDS: usize = BUCKETS_PER_DECADE * DECADES + 1;

/// Latency histogram with fixed log-spaced bucket bounds from 1 µs to 10 s.
///
/// Bucket `i` (for `i < BOUNDS`) counts observations `<= bound(i)`; the
/// final bucket counts everything above 10 s.
#[derive(Debug, Clone)]
pub struct LatencyHistogram {
    counts: Vec<u64>,
    total: u64,
    sum_secs: f64,
}

impl Default for LatencyHistogram {
    fn default() -> Self {
        Self {
            counts: vec![0; BOUNDS + 1],
            total: 0,
            sum_secs: 0.0,
        }
    }
}

impl LatencyHistogram {
    /// Upper bound in seconds of bucket `i`.
    pub fn bound(i: usize) -> f64 {
        10f64.powf(-6.0 + i as f64 / BUCKETS_PER_DECADE as f64)
    }

    pub fn record(&mut self, d: Duration) {
        let secs = d.as_secs_f64();
        let idx = if secs <= 1e-6 {
            0
        } else {
            let pos = ((secs.log10() + 6.0) * BUCKETS_PER_DECADE as f64).ceil() as usize;
            // ceil of log10 can land one bucket high on exact bounds
            if pos > 0 && pos <= BOUNDS && secs <= Self::bound(pos - 1) {
                pos - 1
            } else {
                pos.min(BOUNDS)
            }
        };
        self.counts[idx] += 1;
        self.total += 1;
        self.sum_secs += secs;
    }

    pub fn count(&self) -> u64 {
        self.total
    }

    pub fn mean_secs(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.sum_secs / self.total as f64
        }
    }

    /// Upper bound of the bucket holding quantile `q`; `None` when empty.
    pub fn quantile_secs(&self, q: f64) -> Option<f64> {
        if self.total == 0 {
            return None;
        }
        let rank = ((q.clamp(0.0, 1.0) * self.total as f64).ceil() as u64).max(1);
        let mut seen = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            seen += c;
            if seen >= rank {
                return Some(if i < BOUNDS { Self::bound(i) } else { f64::INFINITY });
            }
        }
        None
    }

    pub fn bucket_counts(&self) -> &[u64] {
        &self.counts
    }
}

/// Server operations with their own latency histogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Push,
    SetParams,
    PullParams,
    Sample,
    UpdatePriorities,
    PullExperiences,
}

impl Op {
    pub const ALL: [Op; 6] = [
        Op::Push,
        Op::SetParams,
        Op::PullParams,
        Op::Sample,
        Op::UpdatePriorities,
        Op::PullExperiences,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Op::Push => "push",
            Op::SetParams => "set_params",
            Op::PullParams => "pull_params",
            Op::Sample => "sample",
            Op::UpdatePriorities => "update_priorities",
            Op::PullExperiences => "pull_experiences",
        }
    }
}

#[derive(Debug, Default)]
pub struct ServerStats {
    pub pushes: AtomicU64,
    pub experiences_pushed: AtomicU64,
    pub experiences_added: AtomicU64,
    pub experiences_rejected: AtomicU64,
    pub experiences_drained: AtomicU64,
    pub experience_pulls: AtomicU64,
    pub param_sets: AtomicU64,
    pub param_pulls: AtomicU64,
    pub sample_requests: AtomicU64,
    pub experiences_sampled: AtomicU64,
    pub priority_updates_applied: AtomicU64,
    pub priority_updates_stale: AtomicU64,
    pub bytes_in: AtomicU64,
    pub bytes_out: AtomicU64,
    pub sampled_record_bytes_out: AtomicU64,
    pub drained_record_bytes_out: AtomicU64,
    pub queued_experiences: AtomicU64,
    pub queue_high_water: AtomicU64,
    pub replay_live: AtomicU64,
    latencies: Mutex<Vec<LatencyHistogram>>,
}

pub(crate) fn bump(counter: &AtomicU64, n: u64) {
    counter.fetch_add(n, Ordering::Relaxed);
}

impl ServerStats {
    pub fn new() -> Self {
        Self {
            latencies: Mutex::new(vec![LatencyHistogram::default(); Op::ALL.len()]),
            ..Default::default()
        }
    }

    pub fn record_latency(&self, op: Op, d: Duration) {
        let idx = Op::ALL.iter().position(|&o| o == op).unwrap();
        let mut guard = self.latencies.lock().unwrap();
        if guard.is_empty() {
            *guard = vec![LatencyHistogram::default(); Op::ALL.len()];
        }
        guard[idx].record(d);
    }

    pub fn latency(&self, op: Op) -> LatencyHistogram {
        let idx = Op::ALL.iter().position(|&o| o == op).unwrap();
        self.latencies
            .lock()
            .unwrap()
            .get(idx)
            .cloned()
            .unwrap_or_default()
    }

    pub fn observe_queue_depth(&self, depth: u64) {
        self.queue_high_water.fetch_max(depth, Ordering::Relaxed);
    }

    pub fn snapshot(&self, queue_depth: u64) -> StatsSnapshot {
        let g = |c: &AtomicU64| c.load(Ordering::Relaxed);
        StatsSnapshot {
            pushes: g(&self.pushes),
            experiences_pushed: g(&self.experiences_pushed),
            experiences_added: g(&self.experiences_added),
            experiences_rejected: g(&self.experiences_rejected),
            experiences_drained: g(&self.experiences_drained),
            experience_pulls: g(&self.experience_pulls),
            param_sets: g(&self.param_sets),
            param_pulls: g(&self.param_pulls),
            sample_requests: g(&self.sample_requests),
            experiences_sampled: g(&self.experiences_sampled),
            priority_updates_applied: g(&self.priority_updates_applied),
            priority_updates_stale: g(&self.priority_updates_stale),
            bytes_in: g(&self.bytes_in),
            bytes_out: g(&self.bytes_out),
            sampled_record_bytes_out: g(&self.sampled_record_bytes_out),
            drained_record_bytes_out: g(&self.drained_record_bytes_out),
            queue_depth,
            queued_experiences: g(&self.queued_experiences),
            queue_high_water: g(&self.queue_high_water),
            replay_live: g(&self.replay_live),
        }
    }

    /// Appends `timestamp,counter,value` rows for every counter and
    /// per-op latency summary.
    pub fn write_csv(&self, path: &Path, snapshot: &StatsSnapshot) -> io::Result<()> {
        let new_file = !path.exists();
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        let mut w = csv::Writer::from_writer(file);
        if new_file {
            w.write_record(["timestamp", "counter", "value"])?;
        }
        let ts = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or_default()
            .as_secs_f64();
        let ts = format!("{ts:.6}");
        for (name, v) in snapshot.fields() {
            w.write_record([ts.as_str(), name, &v.to_string()])?;
        }
        for op in Op::ALL {
            let h = self.latency(op);
            let rows = [
                ("count", h.count() as f64),
                ("mean_s", h.mean_secs()),
                ("p50_s", h.quantile_secs(0.5).unwrap_or(0.0)),
                ("p99_s", h.quantile_secs(0.99).unwrap_or(0.0)),
            ];
            for (suffix, v) in rows {
                w.write_record([
                    ts.as_str(),
                    &format!("latency_{}_{suffix}", op.name()),
                    &v.to_string(),
                ])?;
            }
        }
        w.flush()
    }
}
