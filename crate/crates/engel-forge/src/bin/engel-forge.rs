use std::path::PathBuf;

use clap::Parser;
use engel_forge::cli;
use engel_forge::config::Verb;

/// Convex curve surgery and Engel certificates for complex tangencies.
#[derive(Parser)]
#[command(version)]
struct Args {
    verb: Verb,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() {
    let args = Args::parse();
    // ENGEL_FORGE_THREADS caps the worker pool
    if let Some(n) = std::env::var("ENGEL_FORGE_THREADS").ok().and_then(|v| v.parse().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let status = cli::run(args.verb, &args.config, args.out, args.seed);
    std::process::exit(status as i32);
}
