//! Fit the weighted-error exponent and kernel blend against closed-loop
//! driving scores: generate a study, fit on a train split of the policy
//! family, and print the chosen weights plus the held-out check. The result
//! lands in uwe.toml, ready to be reused as fixed weights.
//!
//! Run with: cargo run --example fit_weights

use std::error::Error;
use std::fs;

use loopgap::config::StudyConfig;
use loopgap::pipeline::{cmd_fit_uwe, cmd_simulate};

fn main() -> Result<(), Box<dyn Error>> {
    let dir = std::env::temp_dir().join("loopgap-example-fit");
    fs::create_dir_all(&dir)?;

    let mut cfg = StudyConfig::default();
    cfg.study.samples = 4;

    let sim = cmd_simulate(&cfg, &dir)?;
    println!("{}", sim.summary);

    let fit = cmd_fit_uwe(&cfg, &dir)?;
    for note in &fit.notes {
        println!("note: {note}");
    }
    println!("{}", fit.summary);

    println!();
    println!("uwe.toml:");
    for line in fs::read_to_string(dir.join("uwe.toml"))?.lines() {
        println!("  {line}");
    }
    println!();
    println!("diagnostics: {}", dir.join("fit_diagnostics.json").display());
    Ok(())
}
