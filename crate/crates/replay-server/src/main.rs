use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use replay_server::{load_rules, AppState, Collection, ServerConfig};

/// Replays WARC and WACZ collections over HTTP.
#[derive(Debug, Parser)]
#[command(name = "replay-server", version)]
struct Args {
    /// WARC file (plain or gzip). Repeatable.
    #[arg(long = "warc", value_name = "PATH")]
    warcs: Vec<PathBuf>,
    /// WACZ package. Repeatable.
    #[arg(long = "wacz", value_name = "PATH")]
    waczs: Vec<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// TOML file replacing the built-in fuzzy rules.
    #[arg(long, value_name = "PATH")]
    rules: Option<PathBuf>,
    /// Do not inject the context block and shim script into HTML.
    #[arg(long)]
    no_shim: bool,
    #[arg(long, default_value = "/web/")]
    replay_base: String,
    /// JavaScript file served at /_shim/shim.js.
    #[arg(long, value_name = "PATH")]
    shim_asset: Option<PathBuf>,
    /// Log every resolution to stderr.
    #[arg(short, long)]
    verbose: bool,
}

fn load(paths: &[PathBuf], rules: Option<&std::path::Path>) -> Result<Collection, String> {
    let rules = load_rules(rules).map_err(|e| e.to_string())?;
    let (collection, reports) = Collection::open(paths, rules).map_err(|e| e.to_string())?;
    for r in &reports {
        match &r.error {
            Some(e) => eprintln!("{}: {} records, {} indexed, stopped: {e}", r.locator, r.records, r.indexed),
            None => eprintln!("{}: {} records, {} indexed", r.locator, r.records, r.indexed),
        }
    }
    Ok(collection)
}

#[tokio::main]
async fn main() -> ExitCode {
    let args = Args::parse();
    let config = ServerConfig {
        replay_base: args.replay_base.clone(),
        shim_asset: args.shim_asset.clone(),
        inject_shim: !args.no_shim,
        verbose: args.verbose,
    };
    if let Err(e) = config.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let paths: Vec<PathBuf> = args.warcs.iter().chain(&args.waczs).cloned().collect();
    let collection = match load(&paths, args.rules.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let state = AppState::new(config, collection);

    #[cfg(unix)]
    {
        let state = state.clone();
        let rules = args.rules.clone();
        tokio::spawn(async move {
            use tokio::signal::unix::{signal, SignalKind};
            let Ok(mut hup) = signal(SignalKind::hangup()) else {
                return;
            };
            while hup.recv().await.is_some() {
                let (paths, rules) = (paths.clone(), rules.clone());
                match tokio::task::spawn_blocking(move || load(&paths, rules.as_deref())).await {
                    Ok(Ok(c)) => {
                        state.swap(c);
                        eprintln!("reloaded collection");
                    }
                    Ok(Err(e)) => eprintln!("reload failed: {e}"),
                    Err(e) => eprintln!("reload failed: {e}"),
                }
            }
        });
    }

    let listener = match tokio::net::TcpListener::bind(args.listen).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: cannot listen on {}: {e}", args.listen);
            return ExitCode::from(1);
        }
    };
    eprintln!("serving on http://{}{}", args.listen, state.config.replay_base);
    match replay_server::serve(listener, state).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
