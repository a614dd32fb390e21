use std::collections::VecDeque;
use std::sync::Mutex;

use crate::protocol::PushRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueFull;

#[derive(Debug, Default)]
struct Inner {
    batches: VecDeque<VecDeque<PushRecord>>,
    experiences: usize,
}

/// Bounded FIFO of pushed batches, drained experience-by-experience by a
/// remote replay (mode A). A drain may split the front batch.
#[derive(Debug)]
pub struct ExperienceQueue {
    inner: Mutex<Inner>,
    capacity_batches: usize,
}

impl ExperienceQueue {
    pub fn new(capacity_batches: usize) -> Self {
        Self {
            inner: Mutex::new(Inner::default()),
            capacity_batches: capacity_batches.max(1),
        }
    }

    /// Appends one batch; returns the new depth in batches.
    pub fn push(&self, records: Vec<PushRecord>) -> Result<usize, QueueFull> {
        let mut inner = self.inner.lock().unwrap();
        if inner.batches.len() >= self.capacity_batches {
            return Err(QueueFull);
        }
        inner.experiences += records.len();
        inner.batches.push_back(records.into());
        Ok(inner.batches.len())
    }

    /// Removes up to `max` experiences in FIFO order.
    pub fn drain(&self, max: usize) -> Vec<PushRecord> {
        let mut inner = self.inner.lock().unwrap();
        let mut out = Vec::with_capacity(max.min(inner.experiences));
        while out.len() < max {
            let Some(front) = inner.batches.front_mut() else {
                break;
            };
            let take = (max - out.len()).min(front.len());
            out.extend(front.drain(..take));
            if front.is_empty() {
                inner.batches.pop_front();
            }
        }
        inner.experiences -= out.len();
        out
    }

    pub fn depth_batches(&self) -> usize {
        self.inner.lock().unwrap().batches.len()
    }

    pub fn len_experiences(&self) -> usize {
        self.inner.lock().unwrap().experiences
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::Experience;

    fn batch(start: u32, n: u32) -> Vec<PushRecord> {
        (start..start + n)
            .map(|i| PushRecord {
                priority: 1.0,
                experience: Experience::new(vec![i as f32], 0, 0.0, vec![0.0]),
            })
            .collect()
    }

    fn ids(recs: &[PushRecord]) -> Vec<u32> {
        recs.iter().map(|r| r.experience.state[0] as u32).collect()
    }

    #[test]
    fn drain_all_and_empty() {
        let q = ExperienceQueue::new(8);
        q.push(batch(0, 200)).unwrap();
        q.push(batch(200, 200)).unwrap();
        let got = q.drain(1000);
        assert_eq!(ids(&got), (0..400).collect::<Vec<_>>());
        assert_eq!(q.len_experiences(), 0);
        assert!(q.drain(1000).is_empty());
    }

    #[test]
    fn partial_drain_splits_front_batch() {
        let q = ExperienceQueue::new(8);
        q.push(batch(0, 5)).unwrap();
        q.push(batch(5, 5)).unwrap();
        assert_eq!(ids(&q.drain(3)), vec![0, 1, 2]);
        assert_eq!(q.depth_batches(), 2);
        assert_eq!(ids(&q.drain(4)), vec![3, 4, 5, 6]);
        assert_eq!(q.depth_batches(), 1);
        assert_eq!(q.len_experiences(), 3);
    }

    #[test]
    fn bounded_in_batches() {
        let q = ExperienceQueue::new(2);
        q.push(batch(0, 1)).unwrap();
        assert_eq!(q.push(batch(1, 1)), Ok(2));
        assert_eq!(q.push(batch(2, 1)), Err(QueueFull));
        assert_eq!(q.len_experiences(), 2);
    }
}
