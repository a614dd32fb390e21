//! Replay/parameter server.
//!
//! Mode A (`SharedMemory`) keeps a bounded queue of pushed batches that a
//! remote replay drains. Mode B (`ColocatedReplay`) hosts the SumTree on a
//! dedicated replay thread and answers sample and priority-update requests.
//! Both modes serve the parameter store. Every client connection gets its own
//! handler thread.

mod conn;
mod params;
mod queue;
mod replay_thread;
mod stats;
mod transport;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU32, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crossbeam_channel::{bounded, unbounded, Sender};
use log::{info, warn};
use thiserror::Error;

pub use params::{ParamSnapshot, ParameterStore};
pub use queue::{ExperienceQueue, QueueFull};
pub use replay_thread::{ReplayCommand, ReplayWorker, SampleError};
pub use stats::{LatencyHistogram, Op, ServerStats};
pub use transport::{TcpTransport, Transport, TransportStream};

use crate::protocol::{PushRecord, ServerMode, StatsSnapshot};
use crate::replay::DEFAULT_P_MIN;
use crate::sumtree::{SumTree, SumTreeError};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tree(#[from] SumTreeError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("server thread panicked")]
    Panicked,
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub mode: ServerMode,
    pub listen: String,
    pub capacity: u64,
    pub alpha: f64,
    pub p_min: f64,
    /// Ingress bound in batches (mode A queue and mode B channel alike).
    pub queue_batches: usize,
    pub state_dim: u32,
    pub action_count: u32,
    pub seed: u64,
    pub stratified: bool,
    pub stats_csv: Option<PathBuf>,
    pub accept_poll: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            mode: ServerMode::ColocatedReplay,
            listen: "127.0.0.1:0".into(),
            capacity: 65_536,
            alpha: 0.6,
            p_min: DEFAULT_P_MIN,
            queue_batches: 64,
            state_dim: 4,
            action_count: 4,
            seed: 0,
            stratified: false,
            stats_csv: None,
            accept_poll: Duration::from_millis(2),
        }
    }
}

impl ServerConfig {
    pub fn validate(&self) -> Result<(), ServerError> {
        let bad = |m: &str| Err(ServerError::Config(m.to_string()));
        if self.capacity == 0 {
            return bad("capacity must be positive");
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad("alpha must be finite and non-negative");
        }
        if !(self.p_min.is_finite() && self.p_min > 0.0) {
            return bad("p_min must be positive");
        }
        if self.queue_batches == 0 {
            return bad("queue_batches must be positive");
        }
        if self.state_dim == 0 || self.action_count == 0 {
            return bad("state_dim and action_count must be positive");
        }
        Ok(())
    }
}

pub(crate) enum Backend {
    SharedMemory {
        queue: ExperienceQueue,
    },
    Colocated {
        ingress: Sender<Vec<PushRecord>>,
        commands: Sender<ReplayCommand>,
    },
}

pub(crate) struct Shared {
    pub config: ServerConfig,
    pub stats: Arc<ServerStats>,
    pub params: ParameterStore,
    pub backend: Backend,
    pub shutdown: Arc<AtomicBool>,
    pub next_session: AtomicU32,
}

impl Shared {
    fn queue_depth(&self) -> u64 {
        match &self.backend {
            Backend::SharedMemory { queue } => queue.depth_batches() as u64,
            Backend::Colocated { ingress, .. } => ingress.len() as u64,
        }
    }

    fn snapshot(&self) -> StatsSnapshot {
        self.stats.snapshot(self.queue_depth())
    }
}

pub struct Server;

impl Server {
    /// Binds a TCP listener and starts serving in background threads.
    pub fn start(config: ServerConfig) -> Result<ServerHandle, ServerError> {
        config.validate()?;
        let transport = TcpTransport::bind(&config.listen)?;
        Self::start_with_transport(config, transport)
    }

    pub fn start_with_transport<T: Transport>(
        config: ServerConfig,
        transport: T,
    ) -> Result<ServerHandle, ServerError> {
        config.validate()?;
        let local_addr = transport.local_addr()?;
        let stats = Arc::new(ServerStats::new());
        let shutdown = Arc::new(AtomicBool::new(false));

        let mut replay = None;
        let backend = match config.mode {
            ServerMode::SharedMemory => Backend::SharedMemory {
                queue: ExperienceQueue::new(config.queue_batches),
            },
            ServerMode::ColocatedReplay => {
                let mut tree = SumTree::with_alpha(config.capacity, config.alpha, config.p_min)?;
                tree.set_stratified(config.stratified);
                let (ingress, ingress_rx) = bounded(config.queue_batches);
                let (commands, commands_rx) = unbounded();
                let worker =
                    ReplayWorker::new(tree, config.seed, ingress_rx, commands_rx, Arc::clone(&stats));
                let join = thread::Builder::new()
                    .name("replay".into())
                    .spawn(move || worker.run())?;
                replay = Some(join);
                Backend::Colocated { ingress, commands }
            }
        };

        let shared = Arc::new(Shared {
            config,
            stats,
            params: ParameterStore::new(),
            backend,
            shutdown: Arc::clone(&shutdown),
            next_session: AtomicU32::new(1),
        });
        let acceptor = {
            let shared = Arc::clone(&shared);
            thread::Builder::new()
                .name("acceptor".into())
                .spawn(move || accept_loop(shared, transport))?
        };
        info!(
            "serving mode {} on {local_addr}",
            shared.config.mode.letter()
        );
        Ok(ServerHandle {
            shared,
            local_addr,
            acceptor: Some(acceptor),
            replay,
            finished: false,
        })
    }
}

fn accept_loop<T: Transport>(shared: Arc<Shared>, transport: T) {
    let mut handlers: Vec<JoinHandle<()>> = Vec::new();
    while !shared.shutdown.load(Ordering::Relaxed) {
        match transport.accept() {
            Ok(Some((stream, peer))) => {
                let shared = Arc::clone(&shared);
                let spawned = thread::Builder::new()
                    .name(format!("conn-{peer}"))
                    .spawn(move || conn::serve(shared, stream, peer));
                match spawned {
                    Ok(h) => handlers.push(h),
                    Err(e) => warn!("cannot spawn connection handler: {e}"),
                }
                handlers.retain(|h| !h.is_finished());
            }
            Ok(None) => thread::sleep(shared.config.accept_poll),
            Err(e) => {
                warn!("accept failed: {e}");
                thread::sleep(shared.config.accept_poll);
            }
        }
    }
    for h in handlers {
        let _ = h.join();
    }
}

/// Keeps the replay thread blocked until dropped. Lets tests fill the
/// bounded ingress deterministically.
pub struct ReplayPause {
    resume: Option<Sender<()>>,
}

impl Drop for ReplayPause {
    fn drop(&mut self) {
        if let Some(tx) = self.resume.take() {
            let _ = tx.send(());
        }
    }
}

pub struct ServerHandle {
    shared: Arc<Shared>,
    local_addr: SocketAddr,
    acceptor: Option<JoinHandle<()>>,
    replay: Option<JoinHandle<SumTree>>,
    finished: bool,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn mode(&self) -> ServerMode {
        self.shared.config.mode
    }

    pub fn config(&self) -> &ServerConfig {
        &self.shared.config
    }

    pub fn stats(&self) -> StatsSnapshot {
        self.shared.snapshot()
    }

    pub fn latency(&self, op: Op) -> LatencyHistogram {
        self.shared.stats.latency(op)
    }

    pub fn params(&self) -> Arc<ParamSnapshot> {
        self.shared.params.get()
    }

    pub fn shutdown_flag(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.shared.shutdown)
    }

    /// Waits until every acknowledged push is in the tree; returns the live
    /// count. `None` in mode A.
    pub fn sync_replay(&self) -> Option<u64> {
        let Backend::Colocated { commands, .. } = &self.shared.backend else {
            return None;
        };
        let (tx, rx) = bounded(1);
        commands.send(ReplayCommand::Sync(tx)).ok()?;
        rx.recv().ok()
    }

    /// Stalls the replay thread until the guard is dropped. `None` in mode A.
    pub fn pause_replay(&self) -> Option<ReplayPause> {
        let Backend::Colocated { commands, .. } = &self.shared.backend else {
            return None;
        };
        let (tx, rx) = bounded::<()>(1);
        commands.send(ReplayCommand::Pause(rx)).ok()?;
        Some(ReplayPause { resume: Some(tx) })
    }

    pub fn request_shutdown(&self) {
        self.shared.shutdown.store(true, Ordering::Relaxed);
    }

    /// Stops accepting, joins every thread and writes the stats CSV if
    /// configured. Returns the final counters.
    pub fn shutdown(mut self) -> Result<StatsSnapshot, ServerError> {
        self.finish()
    }

    /// Blocks until the shutdown flag is raised, then shuts down.
    pub fn wait(mut self) -> Result<StatsSnapshot, ServerError> {
        while !self.shared.shutdown.load(Ordering::Relaxed) {
            thread::sleep(Duration::from_millis(20));
        }
        self.finish()
    }

    fn finish(&mut self) -> Result<StatsSnapshot, ServerError> {
        if self.finished {
            return Ok(self.shared.snapshot());
        }
        self.finished = true;
        self.request_shutdown();
        let mut panicked = false;
        if let Some(h) = self.acceptor.take() {
            panicked |= h.join().is_err();
        }
        if let Backend::Colocated { commands, .. } = &self.shared.backend {
            let _ = commands.send(ReplayCommand::Shutdown);
        }
        if let Some(h) = self.replay.take() {
            panicked |= h.join().is_err();
        }
        let snapshot = self.shared.snapshot();
        if let Some(path) = &self.shared.config.stats_csv {
            self.shared.stats.write_csv(path, &snapshot)?;
        }
        if panicked {
            return Err(ServerError::Panicked);
        }
        Ok(snapshot)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Err(e) = self.finish() {
            warn!("server shutdown: {e}");
        }
    }
}

/// Runs a server until `shutdown` is raised.
pub fn run(config: ServerConfig, shutdown: Arc<AtomicBool>) -> Result<StatsSnapshot, ServerError> {
    let handle = Server::start(config)?;
    let flag = handle.shutdown_flag();
    while !shutdown.load(Ordering::Relaxed) {
        thread::sleep(Duration::from_millis(20));
    }
    flag.store(true, Ordering::Relaxed);
    handle.shutdown()
}
