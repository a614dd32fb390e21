use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

/// Writes the golden wire-protocol frames, one file per fixture plus a manifest.
#[derive(Debug, Parser)]
#[command(name = "replaynet-fixtures", version)]
struct Args {
    #[arg(long, default_value = "fixtures")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match replaynet::protocol::fixtures::write_corpus(&args.out) {
        Ok(n) => {
            println!("wrote {n} fixtures to {}", args.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("replaynet-fixtures: {e}");
            ExitCode::FAILURE
        }
    }
}
