//! Run the full pipeline in-process from a configuration file.
//!
//! `cargo run --release --example pipeline -- configs/pipeline.json`
use std::path::Path;

use engel_forge::cli::execute;
use engel_forge::config::RunConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/pipeline.json").into());
    let cfg = RunConfig::parse(&std::fs::read_to_string(&path)?)?;
    let outcome = execute(&cfg, Path::new(&path).parent().unwrap_or(Path::new(".")))?;
    for stage in outcome.result["stages"].as_array().into_iter().flatten() {
        let mark = if stage["skipped"] == true { "skip" } else if stage["passed"] == true { "ok" } else { "FAIL" };
        println!("{:<16} {mark}", stage["name"].as_str().unwrap_or("?"));
    }
    println!("passed: {}, {} artifacts", outcome.passed, outcome.artifacts.len());
    for a in &outcome.artifacts {
        println!("  {} ({} bytes)", a.name, a.contents.len());
    }
    Ok(())
}
