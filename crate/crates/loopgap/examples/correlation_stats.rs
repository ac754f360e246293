//! Correlation statistics on a hand-built policy table: Pearson and Spearman
//! coefficients, a seeded bootstrap confidence interval, and the full
//! offline-vs-online correlation report ranked by strength against the
//! primary online metric.
//!
//! Run with: cargo run --example correlation_stats

use std::error::Error;

use loopgap::correlation::{
    bootstrap_ci, correlate, pearson, report_csv, spearman, CorrelateOptions, PolicyFamilyTable,
    PolicyRow, Stat,
};

fn main() -> Result<(), Box<dyn Error>> {
    // Eight policies: "mae" tracks the score almost linearly (inverted),
    // "flat" carries no signal at all.
    let scores = [1.00, 0.95, 0.88, 0.80, 0.71, 0.60, 0.47, 0.33];
    let maes = [0.02, 0.04, 0.09, 0.13, 0.20, 0.27, 0.40, 0.52];
    let flats = [0.30, 0.31, 0.29, 0.30, 0.31, 0.29, 0.30, 0.31];

    let xs: Vec<f64> = maes.to_vec();
    let ys: Vec<f64> = scores.to_vec();
    println!("pearson(mae, score)  = {:+.6}", pearson(&xs, &ys)?);
    println!("spearman(mae, score) = {:+.6}", spearman(&xs, &ys)?);

    let ci = bootstrap_ci(&xs, &ys, Stat::Pearson, 2000, 0.05, 7)?;
    println!("95% bootstrap CI for pearson: [{:.4}, {:.4}] ({} degenerate resamples)", ci.lo, ci.hi, ci.skipped);

    let rows: Vec<PolicyRow> = (0..8)
        .map(|i| PolicyRow {
            policy_id: format!("p{i}"),
            offline: vec![("mae".to_string(), maes[i]), ("flat".to_string(), flats[i])],
            online: vec![("driving_score".to_string(), scores[i])],
        })
        .collect();
    let table = PolicyFamilyTable::new(rows)?;

    let opts = CorrelateOptions { resamples: 500, seed: 7, ..CorrelateOptions::default() };
    let report = correlate(&table, &opts);

    println!();
    println!("ranked report ({} policies, primary '{}'):", report.n_policies, report.primary);
    print!("{}", report_csv(&report));
    Ok(())
}
