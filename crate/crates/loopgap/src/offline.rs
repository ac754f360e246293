//! Offline (open-loop) metrics: per-record loss kernels and weighted
//! aggregation over a dataset.
//!
//! A metric is a loss kernel paired with a weight scheme. The weighted
//! aggregate has two forms: `normalized` divides by the weight sum
//! (the default everywhere), `raw` divides by the record count.

use thiserror::Error;

use crate::datamodel::{Dataset, PredictionRecord, WaypointPlan};
use crate::numeric::{tree_mean, tree_sum};

// ── Loss kernels ─────────────────────────────────────────────────────────────

/// Error norm for scalar/vector losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
}

/// A per-record loss in [0, inf); zero when the executed action (or mean
/// predicted plan) matches ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKernel {
    /// Steering error under the given norm.
    Steer(Norm),
    /// Mean error over the action dimensions {steer, throttle - brake}.
    Action(Norm),
    /// Absolute throttle error.
    Throttle,
    /// Quantized-steer consistency: 1 when the three-way quantization of the
    /// executed steer differs from the ground truth's, else 0.
    Qce { sigma: f64 },
    /// Thresholded relative steering error: 1 when |executed - gt| exceeds
    /// lambda * |gt|, else 0 (ties count as 0).
    Tre { lambda: f64 },
    /// Mean Euclidean distance between the per-point mean predicted plan and
    /// the ground-truth plan.
    WaypointMae,
    /// Euclidean distance between final predicted and final gt waypoint.
    WaypointFde,
    /// Absolute difference of the final-point range norms.
    DisplacementFde,
}

/// Three-way steer quantization: -1 below -sigma, 0 in [-sigma, sigma),
/// +1 at or above sigma.
pub fn quantize_steer(x: f64, sigma: f64) -> i8 {
    if x < -sigma {
        -1
    } else if x < sigma {
        0
    } else {
        1
    }
}

impl LossKernel {
    /// Canonical kernel name, used in metric names and error messages.
    pub fn name(&self) -> &'static str {
        match self {
            LossKernel::Steer(Norm::L1) => "steer_mae",
            LossKernel::Steer(Norm::L2) => "steer_mse",
            LossKernel::Action(Norm::L1) => "action_mae",
            LossKernel::Action(Norm::L2) => "action_mse",
            LossKernel::Throttle => "throttle_mae",
            LossKernel::Qce { .. } => "qce",
            LossKernel::Tre { .. } => "tre",
            LossKernel::WaypointMae => "waypoint_mae",
            LossKernel::WaypointFde => "waypoint_fde",
            LossKernel::DisplacementFde => "fde",
        }
    }

    pub fn requires_waypoints(&self) -> bool {
        matches!(
            self,
            LossKernel::WaypointMae | LossKernel::WaypointFde | LossKernel::DisplacementFde
        )
    }

    /// Evaluate the loss on one record.
    pub fn eval(&self, rec: &PredictionRecord) -> Result<f64, MetricError> {
        let d_steer = rec.executed_action.steer - rec.gt_action.steer;
        match self {
            LossKernel::Steer(Norm::L1) => Ok(d_steer.abs()),
            LossKernel::Steer(Norm::L2) => Ok(d_steer * d_steer),
            LossKernel::Action(norm) => {
                let d_long = rec.executed_action.longitudinal() - rec.gt_action.longitudinal();
                Ok(match norm {
                    Norm::L1 => (d_steer.abs() + d_long.abs()) / 2.0,
                    Norm::L2 => (d_steer * d_steer + d_long * d_long) / 2.0,
                })
            }
            LossKernel::Throttle => {
                Ok((rec.executed_action.throttle - rec.gt_action.throttle).abs())
            }
            LossKernel::Qce { sigma } => {
                let a = quantize_steer(rec.gt_action.steer, *sigma);
                let b = quantize_steer(rec.executed_action.steer, *sigma);
                Ok(if a == b { 0.0 } else { 1.0 })
            }
            LossKernel::Tre { lambda } => {
                Ok(if d_steer.abs() - lambda * rec.gt_action.steer.abs() > 0.0 {
                    1.0
                } else {
                    0.0
                })
            }
            LossKernel::WaypointMae => {
                let (pred, gt) = self.plans(rec)?;
                let dists: Vec<f64> = pred
                    .iter()
                    .zip(gt.points.iter())
                    .map(|(p, g)| ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2)).sqrt())
                    .collect();
                Ok(tree_mean(&dists))
            }
            LossKernel::WaypointFde => {
                let (pred, gt) = self.plans(rec)?;
                let p = pred.last().expect("validated non-empty plan");
                let g = gt.points.last().expect("validated non-empty plan");
                Ok(((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2)).sqrt())
            }
            LossKernel::DisplacementFde => {
                let (pred, gt) = self.plans(rec)?;
                let p = pred.last().expect("validated non-empty plan");
                let g = gt.points.last().expect("validated non-empty plan");
                Ok(((p[0].powi(2) + p[1].powi(2)).sqrt() - (g[0].powi(2) + g[1].powi(2)).sqrt())
                    .abs())
            }
        }
    }

    /// Mean predicted plan (per-point mean over the K sample plans) and the
    /// ground-truth plan.
    fn plans<'r>(
        &self,
        rec: &'r PredictionRecord,
    ) -> Result<(Vec<[f64; 2]>, &'r WaypointPlan), MetricError> {
        let (gt, samples) = match (&rec.gt_waypoints, &rec.samples_waypoints) {
            (Some(gt), Some(samples)) if !gt.is_empty() => (gt, samples),
            _ => {
                return Err(MetricError::MissingWaypoints {
                    kernel: self.name().to_string(),
                    record_id: rec.record_id.clone(),
                })
            }
        };
        let w = gt.len();
        let mut pred = Vec::with_capacity(w);
        for j in 0..w {
            let xs: Vec<f64> = samples.iter().map(|p| p.points[j][0]).collect();
            let ys: Vec<f64> = samples.iter().map(|p| p.points[j][1]).collect();
            pred.push([tree_mean(&xs), tree_mean(&ys)]);
        }
        Ok((pred, gt))
    }
}

/// Look up a bare kernel by its canonical name.
pub fn kernel_by_name(name: &str, params: &KernelParams) -> Option<LossKernel> {
    Some(match name {
        "steer_mae" => LossKernel::Steer(Norm::L1),
        "steer_mse" => LossKernel::Steer(Norm::L2),
        "action_mae" => LossKernel::Action(Norm::L1),
        "action_mse" => LossKernel::Action(Norm::L2),
        "throttle_mae" => LossKernel::Throttle,
        "qce" => LossKernel::Qce { sigma: params.qce_sigma },
        "tre" => LossKernel::Tre { lambda: params.tre_lambda },
        "waypoint_mae" => LossKernel::WaypointMae,
        "waypoint_fde" => LossKernel::WaypointFde,
        "fde" => LossKernel::DisplacementFde,
        _ => return None,
    })
}

/// Tunable kernel parameters with their standard defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub qce_sigma: f64,
    pub tre_lambda: f64,
    /// Exponent used by standalone uncertainty-weighted (`uw_*`) metrics.
    pub uw_gamma: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams { qce_sigma: 0.5, tre_lambda: 0.1, uw_gamma: 1.0 }
    }
}

// ── Weighted aggregation ─────────────────────────────────────────────────────

/// Per-record weight scheme for dataset aggregation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightScheme {
    Uniform,
    /// Weight each record by its recorded ego speed.
    Speed,
    /// Weight each record by its predictive variance to the power gamma.
    Uncertainty { gamma: f64 },
}

/// Both aggregate forms of one metric over a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateForms {
    /// Weighted mean: sum(w * loss) / sum(w).
    pub normalized: f64,
    /// Plain expectation of the weighted loss: sum(w * loss) / n.
    pub raw: f64,
}

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("kernel {kernel}: record '{record_id}': waypoint plans required but absent")]
    MissingWaypoints { kernel: String, record_id: String },
    #[error("kernel {kernel}: degenerate weighting (weight sum is zero over {n} records)")]
    DegenerateWeighting { kernel: String, n: usize },
    #[error("kernel {kernel}: empty dataset")]
    EmptyDataset { kernel: String },
    #[error("uncertainty weights required by scheme but not provided")]
    MissingUncertainty,
    #[error("uncertainty vector has {got} entries for {want} records")]
    UncertaintyLength { got: usize, want: usize },
    #[error("record '{record_id}': invalid weight {value} (must be finite and >= 0)")]
    InvalidWeight { record_id: String, value: f64 },
    #[error("unknown metric '{name}'")]
    UnknownMetric { name: String },
}

/// Resolve the per-record weights for a scheme. `uncertainty` must be given
/// (one value per record, aligned) for [`WeightScheme::Uncertainty`].
pub fn record_weights(
    ds: &Dataset,
    scheme: WeightScheme,
    uncertainty: Option<&[f64]>,
) -> Result<Vec<f64>, MetricError> {
    match scheme {
        WeightScheme::Uniform => Ok(vec![1.0; ds.len()]),
        WeightScheme::Speed => Ok(ds.records.iter().map(|r| r.meta.speed).collect()),
        WeightScheme::Uncertainty { gamma } => {
            let u = uncertainty.ok_or(MetricError::MissingUncertainty)?;
            if u.len() != ds.len() {
                return Err(MetricError::UncertaintyLength { got: u.len(), want: ds.len() });
            }
            let mut weights = Vec::with_capacity(u.len());
            for (rec, &ui) in ds.records.iter().zip(u) {
                if !ui.is_finite() || ui < 0.0 {
                    return Err(MetricError::InvalidWeight {
                        record_id: rec.record_id.clone(),
                        value: ui,
                    });
                }
                weights.push(ui.powf(gamma));
            }
            Ok(weights)
        }
    }
}

/// Aggregate a kernel over a dataset under a weight scheme; both forms.
pub fn aggregate_forms(
    ds: &Dataset,
    kernel: &LossKernel,
    scheme: WeightScheme,
    uncertainty: Option<&[f64]>,
) -> Result<AggregateForms, MetricError> {
    if ds.is_empty() {
        return Err(MetricError::EmptyDataset { kernel: kernel.name().to_string() });
    }
    let weights = record_weights(ds, scheme, uncertainty)?;
    let mut weighted = Vec::with_capacity(ds.len());
    for (rec, w) in ds.records.iter().zip(&weights) {
        weighted.push(w * kernel.eval(rec)?);
    }
    let wsum = tree_sum(&weights);
    if wsum <= 0.0 {
        return Err(MetricError::DegenerateWeighting {
            kernel: kernel.name().to_string(),
            n: ds.len(),
        });
    }
    let num = tree_sum(&weighted);
    Ok(AggregateForms { normalized: num / wsum, raw: num / ds.len() as f64 })
}

/// Normalized weighted aggregate (the default form).
pub fn aggregate(
    ds: &Dataset,
    kernel: &LossKernel,
    scheme: WeightScheme,
    uncertainty: Option<&[f64]>,
) -> Result<f64, MetricError> {
    aggregate_forms(ds, kernel, scheme, uncertainty).map(|f| f.normalized)
}

// ── Metric catalogue and reports ─────────────────────────────────────────────

/// A named metric: kernel plus weight scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpec {
    pub name: String,
    pub kernel: LossKernel,
    pub scheme: WeightScheme,
}

/// Resolve a metric name: `sw_` prefixes speed weighting, `uw_` prefixes
/// uncertainty weighting, bare names are uniform.
pub fn metric_by_name(name: &str, params: &KernelParams) -> Option<MetricSpec> {
    let (scheme, base) = if let Some(base) = name.strip_prefix("sw_") {
        (WeightScheme::Speed, base)
    } else if let Some(base) = name.strip_prefix("uw_") {
        (WeightScheme::Uncertainty { gamma: params.uw_gamma }, base)
    } else {
        (WeightScheme::Uniform, name)
    };
    let kernel = kernel_by_name(base, params)?;
    Some(MetricSpec { name: name.to_string(), kernel, scheme })
}

/// Canonical offline metric names, in report order. Waypoint metrics are
/// included only when the dataset declares waypoint plans.
pub fn canonical_metric_names(has_waypoints: bool) -> Vec<&'static str> {
    let mut names = vec![
        "steer_mse",
        "sw_steer_mse",
        "uw_steer_mse",
        "steer_mae",
        "sw_steer_mae",
        "uw_steer_mae",
        "throttle_mae",
    ];
    if has_waypoints {
        names.extend(["waypoint_mae", "waypoint_fde", "fde"]);
    }
    names.extend([
        "tre",
        "qce",
        "action_mse",
        "action_mae",
        "uw_action_mse",
        "uw_action_mae",
    ]);
    names
}

/// Build the canonical catalogue for a dataset shape.
pub fn canonical_catalogue(has_waypoints: bool, params: &KernelParams) -> Vec<MetricSpec> {
    canonical_metric_names(has_waypoints)
        .into_iter()
        .map(|n| metric_by_name(n, params).expect("canonical names resolve"))
        .collect()
}

/// Per-policy offline metric values, in catalogue order. Weighted metrics
/// additionally report their raw form as `<name>_raw`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub policy_id: String,
    pub entries: Vec<(String, f64)>,
}

/// Evaluate a catalogue over one dataset. Kernels inapplicable to the dataset
/// (waypoint kernels on a control-only dataset) fail with the kernel name.
pub fn metric_report(
    ds: &Dataset,
    catalogue: &[MetricSpec],
    uncertainty: Option<&[f64]>,
    include_raw: bool,
    policy_id: &str,
) -> Result<MetricReport, MetricError> {
    let mut entries = Vec::with_capacity(catalogue.len());
    for spec in catalogue {
        let forms = aggregate_forms(ds, &spec.kernel, spec.scheme, uncertainty)?;
        entries.push((spec.name.clone(), forms.normalized));
        if include_raw && spec.scheme != WeightScheme::Uniform {
            entries.push((format!("{}_raw", spec.name), forms.raw));
        }
    }
    Ok(MetricReport { policy_id: policy_id.to_string(), entries })
}
