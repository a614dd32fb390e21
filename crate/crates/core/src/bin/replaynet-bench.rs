use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::{error, info};
use replaynet::harness::{run_sweep, write_breakdown_csv, write_sweep_csv, BenchConfig};
use replaynet::ServerMode;

/// Latency benchmark: synthetic actors and one learner against a server.
#[derive(Debug, Parser)]
#[command(name = "replaynet-bench", version)]
struct Args {
    #[arg(long, default_value = "B")]
    mode: ServerMode,
    /// Largest actor count; the sweep runs 1, 2, 4, ... up to it.
    #[arg(long, default_value_t = 8)]
    actors: u32,
    /// Run only the given actor count instead of a sweep.
    #[arg(long)]
    no_sweep: bool,
    /// Address of a running server. Required unless --spawn-server.
    #[arg(long)]
    server: Option<SocketAddr>,
    /// Start a fresh in-process server for every sweep point.
    #[arg(long)]
    spawn_server: bool,
    #[arg(long, default_value = "report.csv")]
    out: PathBuf,
    /// Also write the stacked time breakdown here.
    #[arg(long)]
    breakdown: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// state_dim 64 and a 256 KiB parameter blob.
    #[arg(long)]
    small: bool,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    state_dim: Option<u32>,
    #[arg(long)]
    param_bytes: Option<usize>,
}

fn actor_counts(max: u32, sweep: bool) -> Vec<u32> {
    if !sweep {
        return vec![max];
    }
    let mut out: Vec<u32> = std::iter::successors(Some(1u32), |n| n.checked_mul(2))
        .take_while(|&n| n <= max)
        .collect();
    if out.last() != Some(&max) {
        out.push(max);
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    if args.actors == 0 {
        error!("--actors must be at least 1");
        return ExitCode::FAILURE;
    }
    if args.server.is_none() && !args.spawn_server {
        error!("give --server HOST:PORT or --spawn-server");
        return ExitCode::FAILURE;
    }
    let mut config = if args.small { BenchConfig::small() } else { BenchConfig::default() };
    config.mode = args.mode;
    config.seed = args.seed;
    config.server = if args.spawn_server { None } else { args.server };
    if let Some(s) = args.steps {
        config.steps_per_actor = s;
    }
    if let Some(d) = args.state_dim {
        config.state_dim = d;
    }
    if let Some(b) = args.param_bytes {
        config.param_blob_bytes = b;
    }
    let counts = actor_counts(args.actors, !args.no_sweep);
    info!("mode {} actors {counts:?} state_dim {}", config.mode, config.state_dim);
    let reports = match run_sweep(&config, &counts) {
        Ok(r) => r,
        Err(e) => {
            error!("{e}");
            return ExitCode::FAILURE;
        }
    };
    for r in &reports {
        info!(
            "actors={} push p50={:.3}ms throughput={:.0} exp/s learner iterations={}",
            r.actor_count,
            r.push.p50_s * 1e3,
            r.push_throughput,
            r.learner_iterations
        );
    }
    let written = std::fs::File::create(&args.out)
        .map_err(Into::into)
        .and_then(|f| write_sweep_csv(f, &reports));
    if let Err(e) = written {
        error!("writing {}: {e}", args.out.display());
        return ExitCode::FAILURE;
    }
    if let Some(path) = &args.breakdown {
        if let Err(e) = write_breakdown_csv(path, &reports) {
            error!("writing {}: {e}", path.display());
            return ExitCode::FAILURE;
        }
    }
    ExitCode::SUCCESS
}
