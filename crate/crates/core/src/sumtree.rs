//! Prioritized replay memory backed by a sum tree.
//!
//! Leaves hold `p^α` for each occupied slot and internal nodes hold subtree
//! sums, so proportional sampling is a root-to-leaf walk. The tree is stored
//! flat: node `i` has children `2i + 1` and `2i + 2`, and leaf `j` lives at
//! `capacity - 1 + j`. Capacity is rounded up to a power of two so every
//! walk has the same depth.
//!
//! Slots form a ring: once full, each insert overwrites the oldest slot.
//! Occupied slots are always a prefix of the leaves (`0..len`), and
//! unoccupied leaves hold 0, so a sampling walk can never end on one.

use std::cell::Cell;

use rand::Rng;
use thiserror::Error;

use crate::replay::{Experience, Priority};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SumTreeError {
    #[error("capacity must be at least 1")]
    ZeroCapacity,
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("replay is empty")]
    Empty,
    #[error("sample point {s} outside [0, {total}]")]
    OutOfRange { s: f64, total: f64 },
    #[error("slot {0} is not live")]
    NotFound(u64),
}

/// Result of a batch draw. The three vectors are parallel.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleResult {
    pub slot_ids: Vec<u64>,
    pub experiences: Vec<Experience>,
    /// Sampling probability of each drawn slot at draw time.
    pub probabilities: Vec<f64>,
}

impl SampleResult {
    pub fn len(&self) -> usize {
        self.slot_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slot_ids.is_empty()
    }
}

#[derive(Debug)]
pub struct SumTree {
    capacity: usize,
    depth: u32,
    alpha: f64,
    p_min: f64,
    nodes: Vec<f64>,
    slots: Vec<Option<Experience>>,
    // insert number (1-based) that last wrote each slot; 0 = never written
    generations: Vec<u64>,
    write_cursor: usize,
    live_count: usize,
    insert_counter: u64,
    stratified: bool,
    last_visits: Cell<u32>,
}

impl SumTree {
    /// Empty tree with α = 1. `capacity_request` is rounded up to a power of two.
    pub fn new(capacity_request: u64, p_min: f64) -> Result<Self, SumTreeError> {
        Self::with_alpha(capacity_request, 1.0, p_min)
    }

    pub fn with_alpha(capacity_request: u64, alpha: f64, p_min: f64) -> Result<Self, SumTreeError> {
        if capacity_request == 0 {
            return Err(SumTreeError::ZeroCapacity);
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(SumTreeError::Invalid(format!("alpha must be >= 0, got {alpha}")));
        }
        if !(p_min > 0.0 && p_min.is_finite()) {
            return Err(SumTreeError::Invalid(format!("p_min must be > 0, got {p_min}")));
        }
        let capacity = usize::try_from(capacity_request)
            .ok()
            .and_then(usize::checked_next_power_of_two)
            .ok_or_else(|| SumTreeError::Invalid(format!("capacity {capacity_request} too large")))?;
        Ok(Self {
            capacity,
            depth: capacity.trailing_zeros(),
            alpha,
            p_min,
            nodes: vec![0.0; 2 * capacity - 1],
            slots: vec![None; capacity],
            generations: vec![0; capacity],
            write_cursor: 0,
            live_count: 0,
            insert_counter: 0,
            stratified: false,
            last_visits: Cell::new(0),
        })
    }

    /// Draw one point per equal-width segment instead of `k` independent points.
    pub fn set_stratified(&mut self, stratified: bool) {
        self.stratified = stratified;
    }

    pub fn capacity(&self) -> u64 {
        self.capacity as u64
    }

    /// Number of internal levels walked by every insert and sample.
    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn p_min(&self) -> f64 {
        self.p_min
    }

    pub fn len(&self) -> u64 {
        self.live_count as u64
    }

    pub fn is_empty(&self) -> bool {
        self.live_count == 0
    }

    pub fn write_cursor(&self) -> u64 {
        self.write_cursor as u64
    }

    pub fn insert_counter(&self) -> u64 {
        self.insert_counter
    }

    /// Sum of all stored leaf weights.
    pub fn total(&self) -> f64 {
        self.nodes[0]
    }

    /// Flat node array: internal sums followed by `capacity` leaves.
    pub fn node_sums(&self) -> &[f64] {
        &self.nodes
    }

    /// Stored weight (`p^α`) of a slot, 0 when unoccupied.
    pub fn leaf_weight(&self, slot_id: u64) -> Option<f64> {
        let slot = usize::try_from(slot_id).ok().filter(|&s| s < self.capacity)?;
        Some(self.nodes[self.capacity - 1 + slot])
    }

    pub fn get(&self, slot_id: u64) -> Option<&Experience> {
        self.slots.get(usize::try_from(slot_id).ok()?)?.as_ref()
    }

    /// Insert number that last wrote `slot_id`; changes whenever the ring
    /// overwrites the slot.
    pub fn generation(&self, slot_id: u64) -> Option<u64> {
        let slot = usize::try_from(slot_id).ok()?;
        match self.generations.get(slot) {
            Some(&g) if g > 0 => Some(g),
            _ => None,
        }
    }

    /// Internal nodes touched by the most recent insert, update or sample.
    pub fn last_node_visits(&self) -> u32 {
        self.last_visits.get()
    }

    /// Stores `experience` at the write cursor, overwriting the oldest slot
    /// once full, and returns its slot id.
    pub fn insert(&mut self, experience: Experience, priority: Priority) -> u64 {
        let slot = self.write_cursor;
        self.slots[slot] = Some(experience);
        self.insert_counter += 1;
        self.generations[slot] = self.insert_counter;
        self.set_leaf(slot, priority);
        self.write_cursor = (self.write_cursor + 1) % self.capacity;
        self.live_count = (self.live_count + 1).min(self.capacity);
        slot as u64
    }

    pub fn update_priority(&mut self, slot_id: u64, priority: Priority) -> Result<(), SumTreeError> {
        let slot = usize::try_from(slot_id)
            .ok()
            .filter(|&s| s < self.capacity && self.slots[s].is_some())
            .ok_or(SumTreeError::NotFound(slot_id))?;
        self.set_leaf(slot, priority);
        Ok(())
    }

    fn set_leaf(&mut self, slot: usize, priority: Priority) {
        let p = priority.get().max(self.p_min);
        let mut idx = self.capacity - 1 + slot;
        self.nodes[idx] = p.powf(self.alpha);
        let mut visits = 0;
        // Recompute parents from their children rather than adding a delta,
        // so internal sums never accumulate drift.
        while idx > 0 {
            idx = (idx - 1) / 2;
            self.nodes[idx] = self.nodes[2 * idx + 1] + self.nodes[2 * idx + 2];
            visits += 1;
        }
        self.last_visits.set(visits);
    }

    /// Recomputes every internal sum bottom-up from the leaves.
    pub fn rebuild(&mut self) {
        for idx in (0..self.capacity - 1).rev() {
            self.nodes[idx] = self.nodes[2 * idx + 1] + self.nodes[2 * idx + 2];
        }
    }

    /// Resolves a point `s ∈ [0, total]` to a slot: descend left while the
    /// left subtree sum is `>= s`, otherwise go right with `s` reduced by the
    /// left sum.
    pub fn sample_one(&self, s: f64) -> Result<u64, SumTreeError> {
        if self.is_empty() {
            return Err(SumTreeError::Empty);
        }
        let total = self.total();
        if !(0.0..=total).contains(&s) {
            return Err(SumTreeError::OutOfRange { s, total });
        }
        let mut idx = 0;
        let mut s = s;
        let mut visits = 0;
        while idx < self.capacity - 1 {
            let left = 2 * idx + 1;
            let right = left + 1;
            visits += 1;
            // Rounding in `s - left` can overshoot into an empty right
            // subtree; such a subtree is never a valid target.
            if self.nodes[left] >= s || self.nodes[right] == 0.0 {
                idx = left;
            } else {
                s -= self.nodes[left];
                idx = right;
            }
        }
        self.last_visits.set(visits);
        let slot = idx + 1 - self.capacity;
        debug_assert!(self.slots[slot].is_some());
        Ok(slot as u64)
    }

    /// Draws `k` slots proportionally to their weights. Duplicates are allowed.
    pub fn sample_batch<R: Rng + ?Sized>(&self, k: u32, rng: &mut R) -> Result<SampleResult, SumTreeError> {
        if self.is_empty() {
            return Err(SumTreeError::Empty);
        }
        if k == 0 {
            return Err(SumTreeError::Invalid("batch size must be >= 1".into()));
        }
        let total = self.total();
        let mut result = SampleResult {
            slot_ids: Vec::with_capacity(k as usize),
            experiences: Vec::with_capacity(k as usize),
            probabilities: Vec::with_capacity(k as usize),
        };
        for i in 0..k {
            let u: f64 = rng.gen();
            let s = if self.stratified {
                ((i as f64 + u) / k as f64 * total).min(total)
            } else {
                u * total
            };
            let slot = self.sample_one(s)?;
            let leaf = self.nodes[self.capacity - 1 + slot as usize];
            result.slot_ids.push(slot);
            result
                .experiences
                .push(self.slots[slot as usize].clone().expect("sampled slot is live"));
            result.probabilities.push(leaf / total);
        }
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp(tag: f32) -> Experience {
        Experience::new(vec![tag], 0, tag, vec![tag])
    }

    fn tree_with(leaves: &[f64]) -> SumTree {
        let mut t = SumTree::new(leaves.len() as u64, 1e-6).unwrap();
        for (i, &p) in leaves.iter().enumerate() {
            t.insert(exp(i as f32), Priority::new(p).unwrap());
        }
        t
    }

    // First index whose inclusive prefix sum reaches s.
    fn scan_oracle(leaves: &[f64], s: f64) -> usize {
        let mut acc = 0.0;
        for (i, &p) in leaves.iter().enumerate() {
            acc += p;
            if acc >= s {
                return i;
            }
        }
        leaves.len() - 1
    }

    #[test]
    fn construction() {
        let t = SumTree::new(65_536, 1e-6).unwrap();
        assert_eq!(t.capacity(), 65_536);
        assert_eq!(t.total(), 0.0);
        assert_eq!(SumTree::new(5, 1e-6).unwrap().capacity(), 8);
        let one = SumTree::new(1, 1e-6).unwrap();
        assert_eq!(one.capacity(), 1);
        assert_eq!(one.node_sums().len(), 1);
        assert_eq!(SumTree::new(0, 1e-6).unwrap_err(), SumTreeError::ZeroCapacity);
    }

    #[test]
    fn insert_examples() {
        let mut t = SumTree::new(4, 1e-6).unwrap();
        assert_eq!(t.insert(exp(0.0), Priority::new(3.0).unwrap()), 0);
        assert_eq!(t.total(), 3.0);

        let t = tree_with(&[1.0, 2.0, 3.0, 4.0]);
        let linear: f64 = [1.0, 2.0, 3.0, 4.0].iter().sum();
        assert_eq!(t.total(), linear);
        assert_eq!(t.total(), 10.0);

        let mut t = tree_with(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(t.insert(exp(9.0), Priority::new(1.0).unwrap()), 0);
        assert_eq!(t.len(), 4);
        assert_eq!(t.get(0), Some(&exp(9.0)));
        assert_eq!(t.write_cursor(), 1);
    }

    #[test]
    fn update_examples() {
        let mut t = tree_with(&[1.0, 2.0, 3.0, 4.0]);
        t.update_priority(3, Priority::new(1.0).unwrap()).unwrap();
        assert_eq!(t.total(), [1.0, 2.0, 3.0, 1.0].iter().sum::<f64>());
        assert_eq!(t.total(), 7.0);
        t.update_priority(3, Priority::new(1.0).unwrap()).unwrap();
        assert_eq!(t.total(), 7.0);

        let mut empty = SumTree::new(4, 1e-6).unwrap();
        assert_eq!(
            empty.update_priority(0, Priority::new(1.0).unwrap()),
            Err(SumTreeError::NotFound(0))
        );
        assert_eq!(
            t.update_priority(99, Priority::new(1.0).unwrap()),
            Err(SumTreeError::NotFound(99))
        );
    }

    #[test]
    fn sample_one_examples() {
        let leaves = [1.0, 2.0, 3.0, 4.0];
        let t = tree_with(&leaves);
        for (s, want) in [(8.0, 3), (1.0, 0), (10.0, 3)] {
            assert_eq!(scan_oracle(&leaves, s), want);
            assert_eq!(t.sample_one(s).unwrap(), want as u64);
        }
        assert!(matches!(t.sample_one(10.5), Err(SumTreeError::OutOfRange { .. })));
        assert!(matches!(t.sample_one(-0.1), Err(SumTreeError::OutOfRange { .. })));
        assert_eq!(SumTree::new(4, 1e-6).unwrap().sample_one(0.0), Err(SumTreeError::Empty));
    }

    #[test]
    fn partially_filled_tree_never_lands_on_empty_leaf() {
        let t = tree_with(&[1.0, 2.0, 3.0]); // capacity 4, leaf 3 empty
        assert_eq!(t.capacity(), 4);
        assert_eq!(t.sample_one(6.0).unwrap(), 2);
        assert_eq!(t.sample_one(0.0).unwrap(), 0);
    }

    #[test]
    fn alpha_is_applied_on_write() {
        let mut t = SumTree::with_alpha(2, 0.5, 1e-6).unwrap();
        t.insert(exp(0.0), Priority::new(4.0).unwrap());
        t.insert(exp(1.0), Priority::new(9.0).unwrap());
        assert_eq!(t.total(), 5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = t.sample_batch(4, &mut rng).unwrap();
        for (id, p) in r.slot_ids.iter().zip(&r.probabilities) {
            let want = if *id == 0 { 0.4 } else { 0.6 };
            assert!((p - want).abs() < 1e-12);
        }
    }

    #[test]
    fn priorities_below_floor_are_raised() {
        let mut t = SumTree::new(2, 0.5).unwrap();
        t.insert(exp(0.0), Priority::new(0.1).unwrap());
        assert_eq!(t.total(), 0.5);
    }

    #[test]
    fn single_leaf_batch() {
        let t = tree_with(&[2.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r = t.sample_batch(16, &mut rng).unwrap();
        assert!(r.slot_ids.iter().all(|&s| s == 0));
        assert!(r.probabilities.iter().all(|&p| p == 1.0));
        assert_eq!(r.experiences.len(), 16);
    }

    #[test]
    fn batch_of_512_from_full_size_tree() {
        let mut t = SumTree::with_alpha(65_536, 0.6, 1e-6).unwrap();
        for i in 0..2048 {
            t.insert(exp(i as f32), Priority::new(1.0 + (i % 7) as f64).unwrap());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = t.sample_batch(512, &mut rng).unwrap();
        assert_eq!(r.len(), 512);
        assert!(r.slot_ids.iter().all(|&s| s < 2048));
    }

    #[test]
    fn uniform_leaves_sample_uniformly() {
        let t = tree_with(&[1.0; 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = t.sample_batch(100_000, &mut rng).unwrap();
        let mut counts = [0u32; 4];
        for s in r.slot_ids {
            counts[s as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 / 100_000.0 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn stratified_covers_every_segment() {
        let mut t = tree_with(&[1.0; 8]);
        t.set_stratified(true);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ids = t.sample_batch(8, &mut rng).unwrap().slot_ids;
        ids.sort();
        assert_eq!(ids, (0..8).collect::<Vec<u64>>());
    }

    #[test]
    fn generations_track_overwrites() {
        let mut t = SumTree::new(2, 1e-6).unwrap();
        assert_eq!(t.generation(0), None);
        t.insert(exp(0.0), Priority::new(1.0).unwrap());
        t.insert(exp(1.0), Priority::new(1.0).unwrap());
        assert_eq!(t.generation(0), Some(1));
        t.insert(exp(2.0), Priority::new(1.0).unwrap());
        assert_eq!(t.generation(0), Some(3));
        assert_eq!(t.insert_counter(), 3);
    }

    #[test]
    fn rebuild_is_identity_on_consistent_tree() {
        let mut t = tree_with(&[0.3, 1.7, 2.2, 9.1, 0.01]);
        let before = t.node_sums().to_vec();
        t.rebuild();
        assert_eq!(before, t.node_sums());
    }
}
