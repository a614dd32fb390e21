use std::net::ToSocketAddrs;
use std::time::{Duration, Instant};

use super::{hello, unexpected, ClientError, Connection};
use crate::protocol::{Message, PushRecord, Role};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PullReport {
    pub latency: Duration,
    pub count: usize,
    pub bytes: u64,
}

/// Remote replay side of mode A: drains pushed experiences from the
/// shared-memory server.
#[derive(Debug)]
pub struct ReplayPuller {
    conn: Connection,
    pulled: u64,
}

impl ReplayPuller {
    pub fn connect<A: ToSocketAddrs>(
        addr: A,
        client_id: u32,
        state_dim: u32,
        action_count: u32,
    ) -> Result<Self, ClientError> {
        let conn = Connection::connect(addr, hello(Role::ReplayPuller, client_id, state_dim, action_count, 0))?;
        Ok(Self { conn, pulled: 0 })
    }

    pub fn connection(&mut self) -> &mut Connection {
        &mut self.conn
    }

    pub fn pulled(&self) -> u64 {
        self.pulled
    }

    pub fn pull(&mut self, max_count: u32) -> Result<(Vec<PushRecord>, PullReport), ClientError> {
        let before = self.conn.bytes_received();
        let started = Instant::now();
        let reply = self.conn.request(&Message::PullExperiences { max_count })?;
        let latency = started.elapsed();
        let Message::ExperiencesBlob(records) = reply else {
            return Err(unexpected("EXPERIENCES_BLOB", &reply));
        };
        self.pulled += records.len() as u64;
        let report = PullReport {
            latency,
            count: records.len(),
            bytes: self.conn.bytes_received() - before,
        };
        Ok((records, report))
    }
}
