//! Score a corrupted policy against ground truth with the full offline metric
//! catalogue. The ground truth comes from replaying the scripted planner on
//! one bundled track; the "policy" is the same planner with added action
//! noise and a 20% chance of ignoring each hazard.
//!
//! Run with: cargo run --example offline_metrics

use std::error::Error;

use loopgap::offline::{canonical_catalogue, metric_report, KernelParams};
use loopgap::simworld::bundle::bundled_tracks;
use loopgap::simworld::dataset::{evaluate_policy_offline, generate_gt_dataset};
use loopgap::simworld::planner::PlannerParams;
use loopgap::simworld::policy::PolicySpec;
use loopgap::simworld::rollout::SimParams;
use loopgap::uncertainty::{estimate, UncertaintyTarget};

fn main() -> Result<(), Box<dyn Error>> {
    let tracks: Vec<_> = bundled_tracks().into_iter().take(1).collect();
    let planner = PlannerParams::default();
    let sim = SimParams::default();

    let gt = generate_gt_dataset(&tracks, &planner, &sim);
    println!("ground truth: {} records on track '{}'", gt.records.len(), tracks[0].track_id);

    let spec = PolicySpec {
        policy_id: "noisy_inattentive".to_string(),
        noise: 0.05,
        miss_rate: 0.2,
        calibrated: true,
        zone_noise_mult: 3.0,
        bias: 0.0,
        k: 8,
    };
    let preds = evaluate_policy_offline(&gt, &spec, &tracks, &planner, 42)?;

    // Per-state predictive variance drives the uncertainty-weighted metrics.
    let unc = estimate(&preds, UncertaintyTarget::Action)?;
    let params = KernelParams::default();
    let catalogue = canonical_catalogue(false, &params);
    let report = metric_report(&preds, &catalogue, Some(&unc.values), false, &spec.policy_id)?;

    println!();
    println!("offline metrics for '{}':", report.policy_id);
    for (name, value) in &report.entries {
        println!("  {:<16} {:.6}", name, value);
    }
    Ok(())
}
