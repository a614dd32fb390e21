use std::sync::{Arc, RwLock};
use std::time::SystemTime;

use bytes::Bytes;

/// One published parameter blob.
#[derive(Debug, Clone)]
pub struct ParamSnapshot {
    pub version: u64,
    pub blob: Bytes,
    pub updated_at: SystemTime,
}

/// Latest model parameters, published by swapping a pointer.
///
/// Writers build the snapshot outside the lock and only hold it to swap;
/// readers clone the `Arc`, so a reader always sees one complete blob.
#[derive(Debug)]
pub struct ParameterStore {
    current: RwLock<Arc<ParamSnapshot>>,
}

impl Default for ParameterStore {
    fn default() -> Self {
        Self {
            current: RwLock::new(Arc::new(ParamSnapshot {
                version: 0,
                blob: Bytes::new(),
                updated_at: SystemTime::now(),
            })),
        }
    }
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Publishes `blob` and returns its version: `max(previous + 1, requested)`.
    pub fn set(&self, blob: Bytes, requested_version: u64) -> u64 {
        let mut next = ParamSnapshot {
            version: 0,
            blob,
            updated_at: SystemTime::now(),
        };
        let mut guard = self.current.write().unwrap();
        next.version = (guard.version + 1).max(requested_version);
        let version = next.version;
        *guard = Arc::new(next);
        version
    }

    pub fn get(&self) -> Arc<ParamSnapshot> {
        Arc::clone(&self.current.read().unwrap())
    }

    pub fn version(&self) -> u64 {
        self.current.read().unwrap().version
    }
}
