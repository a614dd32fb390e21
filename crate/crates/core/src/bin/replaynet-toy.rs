use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use log::{error, info};
use replaynet::harness::{run_toy_training, write_curve_csv, GridSize, ToyConfig};

/// Tabular Q-learning on a grid world through a local mode B server.
#[derive(Debug, Parser)]
#[command(name = "replaynet-toy", version)]
struct Args {
    #[arg(long, default_value = "5x5")]
    grid: GridSize,
    #[arg(long, default_value_t = 2)]
    actors: u32,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "curve.csv")]
    out: PathBuf,
    #[arg(long, default_value_t = 50_000)]
    max_iterations: u64,
    #[arg(long, default_value_t = 300)]
    time_budget_s: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let config = ToyConfig {
        grid: args.grid,
        actors: args.actors,
        seed: args.seed,
        max_iterations: args.max_iterations,
        time_budget: Duration::from_secs(args.time_budget_s),
        ..ToyConfig::default()
    };
    let report = match run_toy_training(&config) {
        Ok(r) => r,
        Err(e) => {
            error!("{e}");
            return ExitCode::FAILURE;
        }
    };
    if let Err(e) = write_curve_csv(&args.out, &report.curve) {
        error!("writing {}: {e}", args.out.display());
        return ExitCode::FAILURE;
    }
    let trend = report.priority_trend;
    info!(
        "iterations={} greedy_steps={} optimal_steps={} wall={:.1}s priority |TD| {:.4} -> {:.4} over {} keys",
        report.iterations,
        report.greedy_steps,
        report.optimal_steps,
        report.wall.as_secs_f64(),
        trend.mean_first,
        trend.mean_last,
        trend.tracked_keys
    );
    if report.success {
        ExitCode::SUCCESS
    } else {
        error!("greedy policy not optimal within budget; see {}", args.out.display());
        ExitCode::from(2)
    }
}
