//! The replay thread of mode B: sole owner of the SumTree.
//!
//! Connection handlers never touch the tree. Pushed batches arrive on the
//! bounded ingress channel; sample and update requests arrive on the command
//! channel and are answered on per-request reply channels. Before serving a
//! command the thread drains pending ingress, so a push that was acknowledged
//! before a sample request is visible to it.

use std::collections::HashMap;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use crossbeam_channel::{select, Receiver, Sender};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::stats::{bump, ServerStats};
use crate::protocol::{PushRecord, SampledRecord};
use crate::replay::Priority;
use crate::sumtree::SumTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleError {
    NotReady,
}

pub enum ReplayCommand {
    Sample {
        session: u32,
        batch_size: u32,
        reply: Sender<Result<Vec<SampledRecord>, SampleError>>,
    },
    Update {
        session: u32,
        updates: Vec<(u64, f64)>,
        reply: Sender<(u32, u32)>,
    },
    SessionClosed(u32),
    /// Replies with the live count once all queued ingress is inserted.
    Sync(Sender<u64>),
    /// Blocks the thread until the paired sender is dropped or signals.
    Pause(Receiver<()>),
    Shutdown,
}

pub struct ReplayWorker {
    tree: SumTree,
    rng: ChaCha8Rng,
    ingress: Receiver<Vec<PushRecord>>,
    commands: Receiver<ReplayCommand>,
    stats: Arc<ServerStats>,
    // per session: slot -> generation observed when it was last sampled
    outstanding: HashMap<u32, HashMap<u64, u64>>,
}

impl ReplayWorker {
    pub fn new(
        tree: SumTree,
        seed: u64,
        ingress: Receiver<Vec<PushRecord>>,
        commands: Receiver<ReplayCommand>,
        stats: Arc<ServerStats>,
    ) -> Self {
        Self {
            tree,
            rng: ChaCha8Rng::seed_from_u64(seed),
            ingress,
            commands,
            stats,
            outstanding: HashMap::new(),
        }
    }

    pub fn run(mut self) -> SumTree {
        loop {
            select! {
                recv(self.ingress) -> batch => match batch {
                    Ok(batch) => self.add(batch),
                    Err(_) => break,
                },
                recv(self.commands) -> cmd => {
                    let Ok(cmd) = cmd else { break };
                    self.drain_ingress();
                    if !self.handle(cmd) {
                        break;
                    }
                }
            }
        }
        self.drain_ingress();
        self.tree
    }

    fn drain_ingress(&mut self) {
        while let Ok(batch) = self.ingress.try_recv() {
            self.add(batch);
        }
    }

    fn add(&mut self, batch: Vec<PushRecord>) {
        let n = batch.len() as u64;
        let p_min = self.tree.p_min();
        for rec in batch {
            self.tree.insert(rec.experience, Priority::clamped(rec.priority, p_min));
        }
        self.stats.queued_experiences.fetch_sub(n, Ordering::Relaxed);
        bump(&self.stats.experiences_added, n);
        self.stats.replay_live.store(self.tree.len(), Ordering::Relaxed);
    }

    /// Returns false when the thread should stop.
    fn handle(&mut self, cmd: ReplayCommand) -> bool {
        match cmd {
            ReplayCommand::Sample {
                session,
                batch_size,
                reply,
            } => {
                let _ = reply.send(self.sample(session, batch_size));
            }
            ReplayCommand::Update {
                session,
                updates,
                reply,
            } => {
                let _ = reply.send(self.update(session, &updates));
            }
            ReplayCommand::SessionClosed(session) => {
                self.outstanding.remove(&session);
            }
            ReplayCommand::Sync(reply) => {
                let _ = reply.send(self.tree.len());
            }
            ReplayCommand::Pause(resume) => {
                let _ = resume.recv();
            }
            ReplayCommand::Shutdown => return false,
        }
        true
    }

    fn sample(&mut self, session: u32, batch_size: u32) -> Result<Vec<SampledRecord>, SampleError> {
        if self.tree.is_empty() {
            return Err(SampleError::NotReady);
        }
        if batch_size == 0 {
            return Ok(Vec::new());
        }
        let result = self
            .tree
            .sample_batch(batch_size, &mut self.rng)
            .map_err(|_| SampleError::NotReady)?;
        let seen = self.outstanding.entry(session).or_default();
        for &slot in &result.slot_ids {
            if let Some(g) = self.tree.generation(slot) {
                seen.insert(slot, g);
            }
        }
        Ok(result
            .slot_ids
            .into_iter()
            .zip(result.probabilities)
            .zip(result.experiences)
            .map(|((slot_id, probability), experience)| SampledRecord {
                slot_id,
                probability,
                experience,
            })
            .collect())
    }

    /// Applies updates in order (last write wins). A slot overwritten since
    /// this session sampled it, or never written, counts as stale.
    fn update(&mut self, session: u32, updates: &[(u64, f64)]) -> (u32, u32) {
        let p_min = self.tree.p_min();
        let seen = self.outstanding.get(&session);
        let (mut applied, mut stale) = (0u32, 0u32);
        for &(slot, p) in updates {
            let overwritten = seen
                .and_then(|s| s.get(&slot))
                .is_some_and(|&g| self.tree.generation(slot) != Some(g));
            if overwritten {
                stale += 1;
                continue;
            }
            match self.tree.update_priority(slot, Priority::clamped(p, p_min)) {
                Ok(()) => applied += 1,
                Err(_) => stale += 1,
            }
        }
        bump(&self.stats.priority_updates_applied, applied as u64);
        bump(&self.stats.priority_updates_stale, stale as u64);
        (applied, stale)
    }
}
