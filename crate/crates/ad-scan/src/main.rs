use std::path::PathBuf;
use std::process::ExitCode;

use ad_scan::{emit_gallery, format_verdict, scan_report, DEFAULT_REPLAY_BASE};
use adreplay_core::ads::spn_block_check;
use clap::{Parser, Subcommand, ValueEnum};

/// Finds and reports advertisement captures in web archives.
#[derive(Debug, Parser)]
#[command(name = "ad-scan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a static gallery of candidate ads found in a WARC.
    Gallery {
        warc: PathBuf,
        /// URI-R of the page the ads were captured on.
        seed_url: String,
        #[arg(long, default_value = "gallery")]
        out: PathBuf,
        /// Replay server the gallery links into.
        #[arg(long, default_value = DEFAULT_REPLAY_BASE)]
        replay_base: String,
    },
    /// Count captures per ad service and type, with blocklist verdicts.
    Report {
        archive: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Show whether the capture-time blocklist would refuse each URL.
    SpnCheck {
        #[arg(required = true)]
        urls: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Gallery {
            warc,
            seed_url,
            out,
            replay_base,
        } => match emit_gallery(&warc, &seed_url, &out, &replay_base) {
            Ok(m) => {
                println!("{} candidates written to {}", m.len(), out.display());
                ExitCode::SUCCESS
            }
            Err(e @ (ad_scan::ScanError::BadSeed(_) | ad_scan::ScanError::BadReplayBase(_))) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Command::Report { archive, format } => match scan_report(&archive) {
            Ok(r) => {
                match format {
                    Format::Text => print!("{}", r.to_text()),
                    Format::Json => println!("{}", r.to_json()),
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Command::SpnCheck { urls } => {
            let mut code = ExitCode::SUCCESS;
            for url in urls {
                match spn_block_check(&url) {
                    Ok(v) => println!("{}", format_verdict(&v)),
                    Err(e) => {
                        eprintln!("error: {url}: {e}");
                        code = ExitCode::from(2);
                    }
                }
            }
            code
        }
    }
}
