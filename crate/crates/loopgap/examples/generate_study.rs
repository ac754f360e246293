//! Generate a complete benchmark study on disk: tracks, a graded family of
//! corrupted policies, ground-truth and per-policy prediction datasets,
//! episode logs, and a manifest with a content hash per artifact. The same
//! seed always produces byte-identical artifacts.
//!
//! Run with: cargo run --example generate_study

use std::error::Error;
use std::fs;

use loopgap::simworld::study::{run_study, StudyOptions};

fn main() -> Result<(), Box<dyn Error>> {
    let dir = std::env::temp_dir().join("loopgap-example-study");
    fs::create_dir_all(&dir)?;

    let opts = StudyOptions { k: 4, ..StudyOptions::default() };
    let manifest = run_study(&dir, &opts)?;

    println!("study written to {}", dir.display());
    println!("seed {}, {} samples per state, {} artifacts", manifest.seed, manifest.k, manifest.artifacts.len());
    println!();
    for entry in manifest.artifacts.iter().take(8) {
        println!("  {}  {}", &entry.sha256[..12], entry.path);
    }
    if manifest.artifacts.len() > 8 {
        println!("  ... and {} more (see manifest.json)", manifest.artifacts.len() - 8);
    }
    Ok(())
}
