//! Writes the golden draw sequence shared with the client shim's tests.

use std::path::PathBuf;
use std::process::ExitCode;

use adreplay_core::seeded_random::{golden_vectors, write_golden_vectors};
use clap::Parser;

#[derive(Debug, Parser)]
#[command(name = "lcg-golden", version)]
struct Args {
    #[arg(long, default_value_t = 1692720944)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    /// Output file; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match &args.out {
        Some(path) => match write_golden_vectors(path, args.seed, args.count) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                ExitCode::from(1)
            }
        },
        None => {
            print!("{}", golden_vectors(args.seed, args.count));
            ExitCode::SUCCESS
        }
    }
}
