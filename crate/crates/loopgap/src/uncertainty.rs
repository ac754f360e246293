//! Predictive-uncertainty estimation and the uncertainty-weighted error (UWE).
//!
//! Per-record uncertainty is the population variance across the K sampled
//! predictions, averaged over the dimensions of the chosen target. UWE is a
//! convex combination of uncertainty-weighted base metrics; its weights can
//! be fit against an online quality signal.

use thiserror::Error;

use crate::datamodel::{Dataset, PredictionRecord};
use crate::numeric::{fnv1a, tree_mean, tree_sum};
use crate::offline::{
    aggregate_forms, kernel_by_name, AggregateForms, KernelParams, MetricError, WeightScheme,
};

// ── Per-record uncertainty ───────────────────────────────────────────────────

/// Which prediction dimensions the variance is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UncertaintyTarget {
    /// Steering only.
    Steer,
    /// Steering and the longitudinal channel (throttle - brake).
    Action,
    /// All 2W waypoint coordinates.
    Waypoints,
}

impl UncertaintyTarget {
    pub fn name(&self) -> &'static str {
        match self {
            UncertaintyTarget::Steer => "steer",
            UncertaintyTarget::Action => "action",
            UncertaintyTarget::Waypoints => "waypoints",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "steer" => UncertaintyTarget::Steer,
            "action" => UncertaintyTarget::Action,
            "waypoints" => UncertaintyTarget::Waypoints,
            _ => return None,
        })
    }
}

/// Population variance (divisor K). Exactly zero when all samples agree.
fn population_variance(xs: &[f64]) -> f64 {
    if xs.iter().all(|&x| x == xs[0]) {
        return 0.0;
    }
    let m = tree_mean(xs);
    let devs: Vec<f64> = xs.iter().map(|&x| (x - m) * (x - m)).collect();
    tree_mean(&devs)
}

/// Per-record predictive variance: population variance across the K samples,
/// averaged over the target's dimensions.
pub fn mc_variance(rec: &PredictionRecord, target: UncertaintyTarget) -> Result<f64, MetricError> {
    match target {
        UncertaintyTarget::Steer => {
            let xs: Vec<f64> = rec.samples_action.iter().map(|a| a.steer).collect();
            Ok(population_variance(&xs))
        }
        UncertaintyTarget::Action => {
            let steer: Vec<f64> = rec.samples_action.iter().map(|a| a.steer).collect();
            let long: Vec<f64> = rec.samples_action.iter().map(|a| a.longitudinal()).collect();
            Ok(tree_mean(&[population_variance(&steer), population_variance(&long)]))
        }
        UncertaintyTarget::Waypoints => {
            let samples = rec.samples_waypoints.as_ref().ok_or_else(|| {
                MetricError::MissingWaypoints {
                    kernel: "waypoint_variance".to_string(),
                    record_id: rec.record_id.clone(),
                }
            })?;
            let w = samples.first().map(|p| p.len()).unwrap_or(0);
            if w == 0 {
                return Err(MetricError::MissingWaypoints {
                    kernel: "waypoint_variance".to_string(),
                    record_id: rec.record_id.clone(),
                });
            }
            let mut dim_vars = Vec::with_capacity(2 * w);
            for j in 0..w {
                for axis in 0..2 {
                    let xs: Vec<f64> = samples.iter().map(|p| p.points[j][axis]).collect();
                    dim_vars.push(population_variance(&xs));
                }
            }
            Ok(tree_mean(&dim_vars))
        }
    }
}

/// Per-record uncertainties for a whole dataset, aligned with its records.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyEstimate {
    pub target: UncertaintyTarget,
    pub values: Vec<f64>,
}

pub fn estimate(ds: &Dataset, target: UncertaintyTarget) -> Result<UncertaintyEstimate, MetricError> {
    let mut values = Vec::with_capacity(ds.len());
    for rec in &ds.records {
        values.push(mc_variance(rec, target)?);
    }
    Ok(UncertaintyEstimate { target, values })
}

// ── UWE ──────────────────────────────────────────────────────────────────────

/// UWE weights: a variance exponent and a convex combination of base metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct UweConfig {
    pub gamma: f64,
    /// (kernel name, beta) pairs; betas are non-negative and sum to one.
    pub betas: Vec<(String, f64)>,
}

impl UweConfig {
    /// Check gamma, kernel names, and the convexity of the betas.
    pub fn validate(&self, params: &KernelParams) -> Result<(), UweError> {
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(UweError::InvalidConfig(format!("gamma {} must be finite and >= 0", self.gamma)));
        }
        if self.betas.is_empty() {
            return Err(UweError::InvalidConfig("no beta entries".to_string()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (name, beta) in &self.betas {
            if kernel_by_name(name, params).is_none() {
                return Err(UweError::InvalidConfig(format!("unknown base metric '{name}'")));
            }
            if !seen.insert(name.clone()) {
                return Err(UweError::InvalidConfig(format!("duplicate base metric '{name}'")));
            }
            if !beta.is_finite() || *beta < 0.0 {
                return Err(UweError::InvalidConfig(format!(
                    "beta for '{name}' is {beta}, must be finite and >= 0"
                )));
            }
        }
        let sum = tree_sum(&self.betas.iter().map(|(_, b)| *b).collect::<Vec<_>>());
        if (sum - 1.0).abs() > 1e-9 {
            return Err(UweError::InvalidConfig(format!("betas sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Both forms of UWE over a dataset: each base kernel is aggregated under
/// variance^gamma weighting, then combined with the betas.
pub fn uwe_forms(
    ds: &Dataset,
    cfg: &UweConfig,
    params: &KernelParams,
    uncertainty: &[f64],
) -> Result<AggregateForms, MetricError> {
    let scheme = WeightScheme::Uncertainty { gamma: cfg.gamma };
    let mut normalized = Vec::with_capacity(cfg.betas.len());
    let mut raw = Vec::with_capacity(cfg.betas.len());
    for (name, beta) in &cfg.betas {
        let kernel = kernel_by_name(name, params)
            .ok_or_else(|| MetricError::UnknownMetric { name: name.clone() })?;
        let forms = aggregate_forms(ds, &kernel, scheme, Some(uncertainty))?;
        normalized.push(beta * forms.normalized);
        raw.push(beta * forms.raw);
    }
    Ok(AggregateForms { normalized: tree_sum(&normalized), raw: tree_sum(&raw) })
}

/// Normalized UWE (the default form).
pub fn uwe(
    ds: &Dataset,
    cfg: &UweConfig,
    params: &KernelParams,
    uncertainty: &[f64],
) -> Result<f64, MetricError> {
    uwe_forms(ds, cfg, params, uncertainty).map(|f| f.normalized)
}

// ── Weight fitting ───────────────────────────────────────────────────────────

/// Gamma grid searched by default.
pub const DEFAULT_GAMMAS: [f64; 4] = [0.25, 0.5, 1.0, 2.0];

/// One policy's fit row: the regression target (lower must mean better) and
/// the base-metric values under each candidate gamma.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRow {
    pub policy_id: String,
    pub target: f64,
    /// `metrics_by_gamma[g][m]` is metric `m` aggregated under gamma `g`.
    pub metrics_by_gamma: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitInput {
    pub metric_names: Vec<String>,
    pub gammas: Vec<f64>,
    pub rows: Vec<FitRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Fraction of policies used for fitting; the rest validate the weights.
    pub train_fraction: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { train_fraction: 0.7 }
    }
}

/// A metric excluded from the regression and why.
#[derive(Debug, Clone, PartialEq)]
pub struct DroppedMetric {
    pub metric: String,
    pub reason: String,
}

/// Fit result for one candidate gamma.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaFit {
    pub gamma: f64,
    pub in_sample_r: f64,
    pub held_out_r: Option<f64>,
    pub kept: Vec<String>,
    pub betas: Vec<(String, f64)>,
    pub dropped: Vec<DroppedMetric>,
    /// True when the regression degenerated and a single best metric was used.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub chosen_gamma: f64,
    pub in_sample_r: f64,
    pub held_out_r: Option<f64>,
    pub per_gamma: Vec<GammaFit>,
    pub train_ids: Vec<String>,
    pub held_out_ids: Vec<String>,
    pub flags: Vec<String>,
}

#[derive(Debug, Error)]
pub enum UweError {
    #[error("invalid UWE config: {0}")]
    InvalidConfig(String),
    #[error("fit input is empty or has no metrics")]
    EmptyInput,
    #[error("fit input shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("policy '{policy_id}' has non-finite value for '{field}'")]
    NonFinite { policy_id: String, field: String },
    #[error("duplicate policy id '{0}' in fit input")]
    DuplicatePolicy(String),
    #[error("{train} training policies for {metrics} metrics; need at least {need}")]
    TooFewPolicies { train: usize, metrics: usize, need: usize },
    #[error("fit degenerated for every gamma: {0}")]
    Degenerate(String),
}

/// Snap betas to the 2^-32 grid so the serialized weights sum to exactly one
/// under any summation order; the rounding residual lands on the largest beta.
pub fn quantize_betas(betas: &mut [(String, f64)]) {
    const SCALE: f64 = 4294967296.0;
    let mut ticks: Vec<i64> = betas.iter().map(|(_, b)| (b * SCALE).round() as i64).collect();
    let residual = SCALE as i64 - ticks.iter().sum::<i64>();
    let mut argmax = 0;
    for (i, t) in ticks.iter().enumerate() {
        if *t > ticks[argmax] {
            argmax = i;
        }
    }
    ticks[argmax] += residual;
    for (slot, t) in betas.iter_mut().zip(ticks) {
        slot.1 = t as f64 / SCALE;
    }
}

fn pearson_or_nan(xs: &[f64], ys: &[f64]) -> f64 {
    crate::correlation::pearson(xs, ys).unwrap_or(f64::NAN)
}

/// Ordinary least squares with an intercept column, via SVD.
fn ols(cols: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let n = y.len();
    let k = cols.len();
    let mat = nalgebra::DMatrix::<f64>::from_fn(n, k + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            cols[j - 1][i]
        }
    });
    let rhs = nalgebra::DVector::<f64>::from_column_slice(y);
    let svd = mat.svd(true, true);
    let sol = svd.solve(&rhs, 1e-12).ok()?;
    Some(sol.iter().skip(1).copied().collect())
}

struct Standardized {
    values: Vec<f64>,
    sigma: f64,
}

fn standardize(xs: &[f64]) -> Option<Standardized> {
    let mu = tree_mean(xs);
    let devs: Vec<f64> = xs.iter().map(|&x| (x - mu) * (x - mu)).collect();
    let sigma = tree_mean(&devs).sqrt();
    if sigma <= 1e-12 * (1.0 + mu.abs()) {
        return None;
    }
    Some(Standardized { values: xs.iter().map(|&x| (x - mu) / sigma).collect(), sigma })
}

/// Indices of columns that are (numerically) linear combinations of earlier
/// ones, found by modified Gram-Schmidt on the standardized columns.
fn collinear_columns(cols: &[&Standardized]) -> Vec<usize> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut dropped = Vec::new();
    for (j, col) in cols.iter().enumerate() {
        let mut resid = col.values.clone();
        for q in &basis {
            let dot: f64 = resid.iter().zip(q).map(|(a, b)| a * b).sum();
            for (r, qv) in resid.iter_mut().zip(q) {
                *r -= dot * qv;
            }
        }
        let norm2: f64 = resid.iter().map(|r| r * r).sum();
        let orig2: f64 = col.values.iter().map(|v| v * v).sum();
        if norm2 < 1e-8 * orig2 {
            dropped.push(j);
        } else {
            let norm = norm2.sqrt();
            basis.push(resid.into_iter().map(|r| r / norm).collect());
        }
    }
    dropped
}

fn validate_fit_input(input: &FitInput) -> Result<(), UweError> {
    if input.rows.is_empty() || input.metric_names.is_empty() || input.gammas.is_empty() {
        return Err(UweError::EmptyInput);
    }
    let mut seen = std::collections::BTreeSet::new();
    for row in &input.rows {
        if !seen.insert(row.policy_id.clone()) {
            return Err(UweError::DuplicatePolicy(row.policy_id.clone()));
        }
        if !row.target.is_finite() {
            return Err(UweError::NonFinite {
                policy_id: row.policy_id.clone(),
                field: "target".to_string(),
            });
        }
        if row.metrics_by_gamma.len() != input.gammas.len() {
            return Err(UweError::ShapeMismatch(format!(
                "policy '{}' has {} gamma blocks for {} gammas",
                row.policy_id,
                row.metrics_by_gamma.len(),
                input.gammas.len()
            )));
        }
        for (gi, block) in row.metrics_by_gamma.iter().enumerate() {
            if block.len() != input.metric_names.len() {
                return Err(UweError::ShapeMismatch(format!(
                    "policy '{}' gamma[{}] has {} metrics for {} names",
                    row.policy_id,
                    gi,
                    block.len(),
                    input.metric_names.len()
                )));
            }
            for (mi, v) in block.iter().enumerate() {
                if !v.is_finite() {
                    return Err(UweError::NonFinite {
                        policy_id: row.policy_id.clone(),
                        field: input.metric_names[mi].clone(),
                    });
                }
            }
        }
    }
    Ok(())
}

/// Deterministic train/validation split: policies ordered by the hash of
/// their id (id itself breaks ties), first ceil(fraction * n) train.
fn split_rows(input: &FitInput, fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let n = input.rows.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let ka = (fnv1a(input.rows[a].policy_id.as_bytes()), &input.rows[a].policy_id);
        let kb = (fnv1a(input.rows[b].policy_id.as_bytes()), &input.rows[b].policy_id);
        ka.cmp(&kb)
    });
    let t = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    (order[..t].to_vec(), order[t..].to_vec())
}

fn fit_one_gamma(
    input: &FitInput,
    gi: usize,
    train: &[usize],
    held: &[usize],
) -> Result<GammaFit, UweError> {
    let gamma = input.gammas[gi];
    let m = input.metric_names.len();
    let y: Vec<f64> = train.iter().map(|&i| input.rows[i].target).collect();
    let raw_cols: Vec<Vec<f64>> = (0..m)
        .map(|j| train.iter().map(|&i| input.rows[i].metrics_by_gamma[gi][j]).collect())
        .collect();

    let mut dropped = Vec::new();
    let mut kept_idx = Vec::new();
    let mut std_cols: Vec<Standardized> = Vec::new();
    for (j, col) in raw_cols.iter().enumerate() {
        match standardize(col) {
            Some(s) => {
                kept_idx.push(j);
                std_cols.push(s);
            }
            None => dropped.push(DroppedMetric {
                metric: input.metric_names[j].clone(),
                reason: "zero variance".to_string(),
            }),
        }
    }

    let refs: Vec<&Standardized> = std_cols.iter().collect();
    let collinear = collinear_columns(&refs);
    for &local in collinear.iter().rev() {
        dropped.push(DroppedMetric {
            metric: input.metric_names[kept_idx[local]].clone(),
            reason: "linearly dependent on earlier metrics".to_string(),
        });
        kept_idx.remove(local);
        std_cols.remove(local);
    }

    let fallback = |dropped: Vec<DroppedMetric>| -> Result<GammaFit, UweError> {
        // Single best metric by signed correlation with the target.
        let mut best: Option<(usize, f64)> = None;
        for (j, col) in raw_cols.iter().enumerate() {
            let r = pearson_or_nan(col, &y);
            if r.is_nan() {
                continue;
            }
            if best.map(|(_, br)| r > br).unwrap_or(true) {
                best = Some((j, r));
            }
        }
        let (j, r) = best.ok_or_else(|| {
            UweError::Degenerate("every metric is constant on the training split".to_string())
        })?;
        let name = input.metric_names[j].clone();
        let held_out_r = if held.len() >= 3 {
            let hx: Vec<f64> = held.iter().map(|&i| input.rows[i].metrics_by_gamma[gi][j]).collect();
            let hy: Vec<f64> = held.iter().map(|&i| input.rows[i].target).collect();
            let hr = pearson_or_nan(&hx, &hy);
            if hr.is_nan() {
                None
            } else {
                Some(hr)
            }
        } else {
            None
        };
        Ok(GammaFit {
            gamma,
            in_sample_r: r,
            held_out_r,
            kept: vec![name.clone()],
            betas: vec![(name, 1.0)],
            dropped,
            fallback: true,
        })
    };

    if std_cols.is_empty() {
        return fallback(dropped);
    }

    // Iteratively re-solve, removing every negatively weighted metric, until
    // the remaining coefficients are all non-negative.
    loop {
        let cols: Vec<Vec<f64>> = std_cols.iter().map(|s| s.values.clone()).collect();
        let Some(b) = ols(&cols, &y) else {
            return fallback(dropped);
        };
        let negatives: Vec<usize> = b
            .iter()
            .enumerate()
            .filter(|(_, &bj)| bj < 0.0)
            .map(|(local, _)| local)
            .collect();
        if !negatives.is_empty() {
            for &local in negatives.iter().rev() {
                dropped.push(DroppedMetric {
                    metric: input.metric_names[kept_idx[local]].clone(),
                    reason: "negative coefficient".to_string(),
                });
                kept_idx.remove(local);
                std_cols.remove(local);
            }
            if std_cols.is_empty() {
                return fallback(dropped);
            }
            continue;
        }

        // Back to raw scale, then normalize to a convex combination.
        let w: Vec<f64> = b.iter().zip(&std_cols).map(|(bj, s)| bj / s.sigma).collect();
        let wsum = tree_sum(&w);
        if !(wsum.is_finite() && wsum > 0.0) {
            return fallback(dropped);
        }
        let betas: Vec<(String, f64)> = kept_idx
            .iter()
            .zip(&w)
            .map(|(&j, wj)| (input.metric_names[j].clone(), wj / wsum))
            .collect();

        let predict = |rows: &[usize]| -> Vec<f64> {
            rows.iter()
                .map(|&i| {
                    let parts: Vec<f64> = kept_idx
                        .iter()
                        .zip(&betas)
                        .map(|(&j, (_, beta))| beta * input.rows[i].metrics_by_gamma[gi][j])
                        .collect();
                    tree_sum(&parts)
                })
                .collect()
        };
        let in_sample_r = pearson_or_nan(&predict(train), &y);
        let held_out_r = if held.len() >= 3 {
            let hy: Vec<f64> = held.iter().map(|&i| input.rows[i].target).collect();
            let hr = pearson_or_nan(&predict(held), &hy);
            if hr.is_nan() {
                None
            } else {
                Some(hr)
            }
        } else {
            None
        };
        return Ok(GammaFit {
            gamma,
            in_sample_r,
            held_out_r,
            kept: kept_idx.iter().map(|&j| input.metric_names[j].clone()).collect(),
            betas,
            dropped,
            fallback: false,
        });
    }
}

/// Fit UWE weights against a target where lower means better. Searches the
/// gamma grid, keeps the gamma with the best in-sample correlation, and
/// returns dyadically quantized betas (their serialized sum is exactly one).
pub fn fit_uwe(input: &FitInput, opts: &FitOptions) -> Result<(UweConfig, FitDiagnostics), UweError> {
    validate_fit_input(input)?;
    let (train, held) = split_rows(input, opts.train_fraction);
    let m = input.metric_names.len();
    let need = m + 2;
    if train.len() < need {
        return Err(UweError::TooFewPolicies { train: train.len(), metrics: m, need });
    }

    let mut per_gamma = Vec::with_capacity(input.gammas.len());
    for gi in 0..input.gammas.len() {
        per_gamma.push(fit_one_gamma(input, gi, &train, &held)?);
    }

    let mut best = 0;
    for (i, fit) in per_gamma.iter().enumerate() {
        let cur = if per_gamma[best].in_sample_r.is_nan() {
            f64::NEG_INFINITY
        } else {
            per_gamma[best].in_sample_r
        };
        let cand = if fit.in_sample_r.is_nan() { f64::NEG_INFINITY } else { fit.in_sample_r };
        if cand > cur {
            best = i;
        }
    }
    let chosen = &per_gamma[best];
    if chosen.in_sample_r.is_nan() {
        return Err(UweError::Degenerate(
            "no gamma produced a usable fit (constant predictions)".to_string(),
        ));
    }

    let mut betas = chosen.betas.clone();
    quantize_betas(&mut betas);

    let mut flags = Vec::new();
    if chosen.fallback {
        flags.push("regression degenerated; fell back to the single best metric".to_string());
    }
    if chosen.in_sample_r < 0.3 {
        flags.push(format!(
            "no predictive metric: in-sample correlation {:.3} is below 0.3",
            chosen.in_sample_r
        ));
    }
    if let Some(hr) = chosen.held_out_r {
        if hr < 0.2 {
            flags.push(format!(
                "no predictive metric: held-out correlation {hr:.3} is below 0.2"
            ));
        }
    }

    let diag = FitDiagnostics {
        chosen_gamma: chosen.gamma,
        in_sample_r: chosen.in_sample_r,
        held_out_r: chosen.held_out_r,
        per_gamma: per_gamma.clone(),
        train_ids: train.iter().map(|&i| input.rows[i].policy_id.clone()).collect(),
        held_out_ids: held.iter().map(|&i| input.rows[i].policy_id.clone()).collect(),
        flags,
    };
    Ok((UweConfig { gamma: chosen.gamma, betas }, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{Action, Command, Dataset, DatasetHeader, ObservationMeta, PredictionRecord, WaypointPlan};
    use crate::offline::Norm;

    fn record_from_samples(id: &str, gt: f64, samples: Vec<f64>) -> PredictionRecord {
        PredictionRecord::new(
            id.to_string(),
            Action::new(gt, 0.5, 0.0),
            None,
            ObservationMeta { speed: 5.0, command: Command::Follow },
            samples.into_iter().map(|s| Action::new(s, 0.5, 0.0)).collect(),
            None,
            None,
        )
    }

    #[test]
    fn steer_variance_matches_hand_values() {
        // Samples {-1, 1}: mean 0, population variance 1.
        let rec = record_from_samples("r0", 0.0, vec![-1.0, 1.0]);
        assert_eq!(mc_variance(&rec, UncertaintyTarget::Steer).unwrap(), 1.0);
        // Four identical samples: exactly zero.
        let rec = record_from_samples("r1", 0.0, vec![0.3; 4]);
        assert_eq!(mc_variance(&rec, UncertaintyTarget::Steer).unwrap(), 0.0);
        // Three identical samples whose mean is inexact in floating point:
        // still exactly zero.
        let rec = record_from_samples("r2", 0.0, vec![0.1, 0.1, 0.1]);
        assert_eq!(mc_variance(&rec, UncertaintyTarget::Steer).unwrap(), 0.0);
    }

    #[test]
    fn action_variance_averages_channel_variances() {
        // Steer samples {-0.2, 0.2} -> var 0.04; longitudinal {-0.4, 0.4} -> var 0.16.
        let rec = PredictionRecord::new(
            "r0".to_string(),
            Action::new(0.0, 0.5, 0.0),
            None,
            ObservationMeta { speed: 5.0, command: Command::Follow },
            vec![Action::new(-0.2, 0.0, 0.4), Action::new(0.2, 0.4, 0.0)],
            None,
            None,
        );
        let got = mc_variance(&rec, UncertaintyTarget::Action).unwrap();
        assert!((got - 0.10).abs() < 1e-15, "got {got}");
    }

    #[test]
    fn waypoint_variance_averages_all_coordinates() {
        // Two sample plans of one point: (0,0) and (2,0). x-var 1, y-var 0 -> 0.5.
        let rec = PredictionRecord::new(
            "r0".to_string(),
            Action::new(0.0, 0.5, 0.0),
            Some(WaypointPlan { points: vec![[1.0, 0.0]] }),
            ObservationMeta { speed: 5.0, command: Command::Follow },
            vec![Action::new(0.0, 0.5, 0.0); 2],
            Some(vec![
                WaypointPlan { points: vec![[0.0, 0.0]] },
                WaypointPlan { points: vec![[2.0, 0.0]] },
            ]),
            None,
        );
        assert_eq!(mc_variance(&rec, UncertaintyTarget::Waypoints).unwrap(), 0.5);
        let bare = record_from_samples("r1", 0.0, vec![0.0]);
        assert!(mc_variance(&bare, UncertaintyTarget::Waypoints).is_err());
    }

    fn two_record_dataset(losses: [f64; 2]) -> Dataset {
        // L1 steer losses equal to `losses`: gt offset from executed 0.
        let records = vec![
            record_from_samples("r0", losses[0], vec![0.0]),
            record_from_samples("r1", losses[1], vec![0.0]),
        ];
        Dataset { header: DatasetHeader::new(1, None, None), records }
    }

    #[test]
    fn uwe_matches_hand_value() {
        // u = {0, 4}, gamma = 1, losses {9, 2}: (0*9 + 4*2) / 4 = 2.
        let ds = two_record_dataset([9.0, 2.0]);
        let cfg = UweConfig { gamma: 1.0, betas: vec![("steer_mae".to_string(), 1.0)] };
        let params = KernelParams::default();
        let u = [0.0, 4.0];
        assert_eq!(uwe(&ds, &cfg, &params, &u).unwrap(), 2.0);
        let forms = uwe_forms(&ds, &cfg, &params, &u).unwrap();
        assert_eq!(forms.raw, 4.0); // (0*9 + 4*2) / 2 records
    }

    #[test]
    fn gamma_zero_reduces_to_unweighted_mean() {
        let ds = two_record_dataset([9.0, 2.0]);
        let cfg = UweConfig { gamma: 0.0, betas: vec![("steer_mae".to_string(), 1.0)] };
        let params = KernelParams::default();
        // 0^0 = 1: a zero-variance record still counts under gamma 0.
        let u = [0.0, 4.0];
        let got = uwe(&ds, &cfg, &params, &u).unwrap();
        let want = crate::offline::aggregate(
            &ds,
            &crate::offline::LossKernel::Steer(Norm::L1),
            WeightScheme::Uniform,
            None,
        )
        .unwrap();
        assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
    }

    #[test]
    fn constant_uncertainty_cancels_in_normalized_form() {
        let ds = two_record_dataset([9.0, 2.0]);
        let params = KernelParams::default();
        let want = crate::offline::aggregate(
            &ds,
            &crate::offline::LossKernel::Steer(Norm::L1),
            WeightScheme::Uniform,
            None,
        )
        .unwrap();
        for gamma in [0.25, 0.5, 1.0, 2.0] {
            let cfg = UweConfig { gamma, betas: vec![("steer_mae".to_string(), 1.0)] };
            let u = [0.37, 0.37];
            let got = uwe(&ds, &cfg, &params, &u).unwrap();
            assert!((got - want).abs() < 1e-12, "gamma {gamma}: got {got}, want {want}");
        }
    }

    #[test]
    fn uwe_combines_betas_convexly() {
        let ds = two_record_dataset([1.0, 0.0]);
        let params = KernelParams::default();
        let u = [1.0, 1.0];
        // steer_mae = 0.5, steer_mse = 0.5 on this dataset; any convex mix is 0.5.
        let cfg = UweConfig {
            gamma: 1.0,
            betas: vec![("steer_mae".to_string(), 0.25), ("steer_mse".to_string(), 0.75)],
        };
        let got = uwe(&ds, &cfg, &params, &u).unwrap();
        assert!((got - 0.5).abs() < 1e-15, "got {got}");
    }

    #[test]
    fn config_validation_rejects_bad_shapes() {
        let params = KernelParams::default();
        let ok = UweConfig {
            gamma: 1.0,
            betas: vec![("steer_mae".to_string(), 0.5), ("qce".to_string(), 0.5)],
        };
        assert!(ok.validate(&params).is_ok());
        let bad_sum = UweConfig { gamma: 1.0, betas: vec![("steer_mae".to_string(), 0.9)] };
        assert!(bad_sum.validate(&params).is_err());
        let bad_name = UweConfig { gamma: 1.0, betas: vec![("pdm".to_string(), 1.0)] };
        assert!(bad_name.validate(&params).is_err());
        let neg = UweConfig {
            gamma: 1.0,
            betas: vec![("steer_mae".to_string(), 1.5), ("qce".to_string(), -0.5)],
        };
        assert!(neg.validate(&params).is_err());
        let bad_gamma = UweConfig { gamma: -1.0, betas: vec![("steer_mae".to_string(), 1.0)] };
        assert!(bad_gamma.validate(&params).is_err());
        let dup = UweConfig {
            gamma: 1.0,
            betas: vec![("steer_mae".to_string(), 0.5), ("steer_mae".to_string(), 0.5)],
        };
        assert!(dup.validate(&params).is_err());
    }

    #[test]
    fn quantized_betas_sum_to_exactly_one_in_any_order() {
        let mut betas = vec![
            ("a".to_string(), 0.302197802197802),
            ("b".to_string(), 0.697802197802198),
        ];
        quantize_betas(&mut betas);
        let forward: f64 = betas.iter().map(|(_, b)| *b).sum();
        let reverse: f64 = betas.iter().rev().map(|(_, b)| *b).sum();
        assert_eq!(forward, 1.0);
        assert_eq!(reverse, 1.0);
        for (_, b) in &betas {
            assert!((b - if *b < 0.5 { 0.302197802197802 } else { 0.697802197802198 }).abs() < 1e-9);
        }

        // A third-split case where naive thirds cannot sum to one.
        let mut thirds = vec![
            ("a".to_string(), 1.0 / 3.0),
            ("b".to_string(), 1.0 / 3.0),
            ("c".to_string(), 1.0 / 3.0),
        ];
        quantize_betas(&mut thirds);
        let sum: f64 = thirds.iter().map(|(_, b)| *b).sum();
        assert_eq!(sum, 1.0);
    }

    fn oracle_fit_input() -> FitInput {
        // Two metrics over four policies with a known least-squares solution.
        let m1 = [0.0, 1.0, 2.0, 3.0];
        let m2 = [0.0, 1.0, 3.0, 2.0];
        let y = [0.1, 1.0, 2.8, 2.4];
        FitInput {
            metric_names: vec!["steer_mae".to_string(), "qce".to_string()],
            gammas: vec![1.0],
            rows: (0..4)
                .map(|i| FitRow {
                    policy_id: format!("p{i}"),
                    target: y[i],
                    metrics_by_gamma: vec![vec![m1[i], m2[i]]],
                })
                .collect(),
        }
    }

    #[test]
    fn fit_matches_independent_least_squares_solution() {
        let input = oracle_fit_input();
        let (cfg, diag) = fit_uwe(&input, &FitOptions { train_fraction: 1.0 }).unwrap();
        assert_eq!(cfg.gamma, 1.0);
        assert_eq!(cfg.betas.len(), 2);
        let beta: std::collections::BTreeMap<&str, f64> =
            cfg.betas.iter().map(|(n, b)| (n.as_str(), *b)).collect();
        assert!((beta["steer_mae"] - 0.302197802197802).abs() < 1e-9, "{beta:?}");
        assert!((beta["qce"] - 0.6978021978021979).abs() < 1e-9, "{beta:?}");
        assert!((diag.in_sample_r - 0.9992589847074276).abs() < 1e-9, "{}", diag.in_sample_r);
        assert!(diag.held_out_r.is_none());
        assert_eq!(diag.train_ids.len(), 4);
        let sum: f64 = cfg.betas.iter().map(|(_, b)| *b).sum();
        assert_eq!(sum, 1.0);
    }

    #[test]
    fn fit_on_exact_single_regressor_recovers_it() {
        let y = [0.5, 1.5, 0.9, 2.0, 1.2];
        let input = FitInput {
            metric_names: vec!["steer_mae".to_string()],
            gammas: vec![0.5, 1.0],
            rows: (0..5)
                .map(|i| FitRow {
                    policy_id: format!("p{i}"),
                    target: y[i],
                    // Power-of-two multiples of the target: r is bitwise equal
                    // for both gammas, so the tie must resolve to the first.
                    metrics_by_gamma: vec![vec![2.0 * y[i]], vec![4.0 * y[i]]],
                })
                .collect(),
        };
        let (cfg, diag) = fit_uwe(&input, &FitOptions { train_fraction: 1.0 }).unwrap();
        assert_eq!(cfg.betas, vec![("steer_mae".to_string(), 1.0)]);
        assert!((diag.in_sample_r - 1.0).abs() < 1e-12);
        // Ties in r resolve to the first gamma of the grid.
        assert_eq!(cfg.gamma, 0.5);
    }

    #[test]
    fn fit_drops_anticorrelated_metric_and_keeps_the_useful_one() {
        let y = [0.2, 0.9, 1.4, 2.1, 2.9, 3.3];
        let input = FitInput {
            metric_names: vec!["steer_mae".to_string(), "qce".to_string()],
            gammas: vec![1.0],
            rows: (0..6)
                .map(|i| FitRow {
                    policy_id: format!("p{i}"),
                    target: y[i],
                    // First tracks the target; second is its negation.
                    metrics_by_gamma: vec![vec![y[i] + 0.01 * (i as f64 % 2.0), -y[i]]],
                })
                .collect(),
        };
        let (cfg, diag) = fit_uwe(&input, &FitOptions { train_fraction: 1.0 }).unwrap();
        // The negated column is collinear with the first (up to the jitter) or
        // negatively weighted; either way only one metric survives with weight 1.
        assert_eq!(cfg.betas.len(), 1);
        assert_eq!(cfg.betas[0].1, 1.0);
        assert!(diag.in_sample_r > 0.99, "{}", diag.in_sample_r);
    }

    #[test]
    fn fit_drops_constant_and_duplicate_columns_with_reasons() {
        let y = [0.1, 0.8, 1.9, 2.2, 3.1, 3.8, 4.4];
        let input = FitInput {
            metric_names: vec![
                "steer_mae".to_string(),
                "qce".to_string(),
                "tre".to_string(),
            ],
            gammas: vec![1.0],
            rows: (0..7)
                .map(|i| FitRow {
                    policy_id: format!("p{i}"),
                    target: y[i],
                    // Constant column, useful column, exact duplicate of it.
                    metrics_by_gamma: vec![vec![0.7, y[i], y[i]]],
                })
                .collect(),
        };
        let (cfg, diag) = fit_uwe(&input, &FitOptions { train_fraction: 1.0 }).unwrap();
        assert_eq!(cfg.betas, vec![("qce".to_string(), 1.0)]);
        let gamma_fit = &diag.per_gamma[0];
        let reasons: Vec<&str> = gamma_fit.dropped.iter().map(|d| d.reason.as_str()).collect();
        assert!(reasons.contains(&"zero variance"), "{reasons:?}");
        assert!(
            reasons.iter().any(|r| r.contains("linearly dependent")),
            "{reasons:?}"
        );
    }

    #[test]
    fn fit_split_is_deterministic_and_sized() {
        let input = FitInput {
            metric_names: vec!["steer_mae".to_string()],
            gammas: vec![1.0],
            rows: (0..10)
                .map(|i| FitRow {
                    policy_id: format!("p{i}"),
                    target: i as f64,
                    metrics_by_gamma: vec![vec![i as f64 + 0.1 * (i as f64).sin()]],
                })
                .collect(),
        };
        let (_, diag1) = fit_uwe(&input, &FitOptions::default()).unwrap();
        let (_, diag2) = fit_uwe(&input, &FitOptions::default()).unwrap();
        assert_eq!(diag1.train_ids, diag2.train_ids);
        assert_eq!(diag1.held_out_ids, diag2.held_out_ids);
        assert_eq!(diag1.train_ids.len(), 7); // ceil(0.7 * 10)
        assert_eq!(diag1.held_out_ids.len(), 3);
        assert!(diag1.held_out_r.is_some());
    }

    #[test]
    fn fit_refuses_underdetermined_input() {
        let input = oracle_fit_input(); // 4 policies, 2 metrics
        let err = fit_uwe(&input, &FitOptions { train_fraction: 0.7 }).unwrap_err();
        // ceil(0.7 * 4) = 3 < 2 + 2.
        match err {
            UweError::TooFewPolicies { train, metrics, need } => {
                assert_eq!((train, metrics, need), (3, 2, 4));
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn fit_flags_unpredictive_metrics() {
        // Each metric value appears once with target +1 and once with -1, so
        // the correlation is (numerically) zero.
        let xs = [0.3, 0.3, 0.9, 0.9, 0.2, 0.2, 0.6, 0.6];
        let ys = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let input = FitInput {
            metric_names: vec!["steer_mae".to_string()],
            gammas: vec![1.0],
            rows: (0..8)
                .map(|i| FitRow {
                    policy_id: format!("p{i}"),
                    target: ys[i],
                    metrics_by_gamma: vec![vec![xs[i]]],
                })
                .collect(),
        };
        let (_, diag) = fit_uwe(&input, &FitOptions { train_fraction: 1.0 }).unwrap();
        assert!(
            diag.flags.iter().any(|f| f.contains("no predictive metric")),
            "flags: {:?}",
            diag.flags
        );
    }

    #[test]
    fn normalized_uwe_is_invariant_to_uncertainty_rescaling() {
        // Scaling all uncertainties by c multiplies u^gamma by c^gamma in both
        // numerator and denominator: the normalized UWE is invariant.
        let ds = two_record_dataset([9.0, 2.0]);
        let params = KernelParams::default();
        for gamma in [0.5, 1.0, 2.0] {
            let cfg = UweConfig { gamma, betas: vec![("steer_mae".to_string(), 1.0)] };
            let u1 = [1.0, 4.0];
            let u2 = [3.0, 12.0];
            let a = uwe(&ds, &cfg, &params, &u1).unwrap();
            let b = uwe(&ds, &cfg, &params, &u2).unwrap();
            assert!((a - b).abs() < 1e-12, "gamma {gamma}: {a} vs {b}");
        }
    }
}
