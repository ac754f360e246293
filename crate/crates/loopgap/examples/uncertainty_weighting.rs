//! Show how variance-powered weighting changes an offline metric. The dataset
//! mixes confident accurate states with uncertain inaccurate ones; raising the
//! exponent gamma shifts weight onto the uncertain states, so the weighted
//! error climbs toward the bad group's loss. Gamma 0 recovers the uniform
//! mean exactly.
//!
//! Run with: cargo run --example uncertainty_weighting

use std::error::Error;

use loopgap::datamodel::{
    Action, Command, Dataset, DatasetHeader, ObservationMeta, PredictionRecord,
};
use loopgap::offline::{aggregate, kernel_by_name, KernelParams, WeightScheme};
use loopgap::uncertainty::{estimate, uwe, UncertaintyTarget, UweConfig};

/// Record with K=4 steer samples spread around `center` by `spread`.
fn record(id: usize, gt_steer: f64, center: f64, spread: f64) -> PredictionRecord {
    let meta = ObservationMeta { speed: 8.0, command: Command::Follow };
    let samples = [-1.5, -0.5, 0.5, 1.5]
        .iter()
        .map(|o| Action::new(center + o * spread, 0.4, 0.0))
        .collect();
    PredictionRecord::new(format!("r{id}"), Action::new(gt_steer, 0.4, 0.0), None, meta, samples, None, None)
}

fn main() -> Result<(), Box<dyn Error>> {
    let mut records = Vec::new();
    // Confident and accurate: tight samples on the truth.
    for i in 0..5 {
        records.push(record(i, 0.10, 0.10, 0.005));
    }
    // Uncertain and wrong: wide samples far from the truth.
    for i in 5..10 {
        records.push(record(i, 0.00, 0.40, 0.10));
    }
    let ds = Dataset { header: DatasetHeader::new(4, None, Some("demo".to_string())), records };

    let unc = estimate(&ds, UncertaintyTarget::Steer)?;
    println!("per-record steer variance: first={:.6} last={:.6}", unc.values[0], unc.values[9]);

    let params = KernelParams::default();
    let kernel = kernel_by_name("steer_mae", &params).expect("known kernel");

    println!();
    println!("{:>6} {:>14}", "gamma", "weighted MAE");
    for gamma in [0.0, 0.25, 0.5, 1.0, 2.0, 4.0] {
        let v = aggregate(&ds, &kernel, WeightScheme::Uncertainty { gamma }, Some(&unc.values))?;
        println!("{:>6} {:>14.6}", gamma, v);
    }
    let uniform = aggregate(&ds, &kernel, WeightScheme::Uniform, None)?;
    println!("uniform mean for reference: {:.6}", uniform);

    // Blend several kernels under one exponent into a single scalar.
    let cfg = UweConfig {
        gamma: 0.5,
        betas: vec![("qce".to_string(), 0.4), ("steer_mae".to_string(), 0.6)],
    };
    cfg.validate(&params)?;
    let blended = uwe(&ds, &cfg, &params, &unc.values)?;
    println!();
    println!("blended error (0.6 steer_mae + 0.4 qce, gamma 0.5): {:.6}", blended);
    Ok(())
}
