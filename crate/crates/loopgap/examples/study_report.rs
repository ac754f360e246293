//! End-to-end study: simulate the bundled policy family, fit the weighted
//! error, correlate every offline metric with every online metric, and print
//! the headline comparison: how the fitted blend ranks against single proxy
//! metrics at predicting the closed-loop driving score.
//!
//! Run with: cargo run --example study_report

use std::error::Error;
use std::fs;

use loopgap::config::StudyConfig;
use loopgap::pipeline::{cmd_report, cmd_simulate};

fn main() -> Result<(), Box<dyn Error>> {
    let dir = std::env::temp_dir().join("loopgap-example-report");
    fs::create_dir_all(&dir)?;

    let cfg = StudyConfig::default();
    println!("{}", cmd_simulate(&cfg, &dir)?.summary);

    let report = cmd_report(&cfg, &dir, false)?;
    for note in &report.notes {
        println!("note: {note}");
    }
    println!("{}", report.summary);

    // correlations.csv rows: offline_metric,online_metric,n,pearson_abs,...
    let csv = fs::read_to_string(dir.join("correlations.csv"))?;
    println!();
    println!("{:<16} {:>10}  (vs driving_score, ranked)", "offline metric", "|pearson|");
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols[1] != "driving_score" {
            continue;
        }
        let marker = if cols[0] == "uwe" { "  <- fitted blend" } else { "" };
        println!("{:<16} {:>10}{}", cols[0], cols[3], marker);
    }
    Ok(())
}
