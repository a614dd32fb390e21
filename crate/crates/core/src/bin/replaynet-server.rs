use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::Parser;
use log::{error, info};
use replaynet::server::{run, ServerConfig};
use replaynet::ServerMode;

/// Replay and parameter server.
#[derive(Debug, Parser)]
#[command(name = "replaynet-server", version)]
struct Args {
    /// A: shared-memory queue drained by a remote replay. B: replay co-located on the server.
    #[arg(long, default_value = "B")]
    mode: ServerMode,
    #[arg(long, default_value = "127.0.0.1:7070")]
    listen: String,
    #[arg(long, default_value_t = 65_536)]
    capacity: u64,
    #[arg(long, default_value_t = 0.6)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-6)]
    p_min: f64,
    /// Ingress bound in batches.
    #[arg(long, default_value_t = 64)]
    queue_batches: usize,
    /// Appended with final counters on shutdown.
    #[arg(long)]
    stats_csv: Option<PathBuf>,
    #[arg(long)]
    state_dim: u32,
    #[arg(long, default_value_t = 4)]
    action_count: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// One draw per equal-mass segment instead of independent draws.
    #[arg(long)]
    stratified: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let config = ServerConfig {
        mode: args.mode,
        listen: args.listen,
        capacity: args.capacity,
        alpha: args.alpha,
        p_min: args.p_min,
        queue_batches: args.queue_batches,
        state_dim: args.state_dim,
        action_count: args.action_count,
        seed: args.seed,
        stratified: args.stratified,
        stats_csv: args.stats_csv,
        ..ServerConfig::default()
    };
    let shutdown = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&shutdown);
    if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::Relaxed)) {
        error!("cannot install signal handler: {e}");
        return ExitCode::FAILURE;
    }
    match run(config, shutdown) {
        Ok(stats) => {
            for (name, value) in stats.fields() {
                info!("{name} = {value}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
