//! Synthetic policy family: the expert planner corrupted by hazard misses,
//! action noise, and steer bias, reporting its uncertainty as K action
//! samples.
//!
//! Replay stability: hazard-miss decisions are drawn up front from a
//! dedicated rng stream keyed by (seed, policy, track), so a policy ignores
//! exactly the same hazards whether it is rolled out closed-loop or replayed
//! on recorded states. Sampling noise uses its own stream.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

use crate::datamodel::{derive_executed_action, get_f64, get_str, get_usize, kind_name, Action, DataError, HazardView};
use crate::numeric::{derive_seed, sig9};
use crate::simworld::geometry::Polyline;
use crate::simworld::planner::{plan, EgoState, PlannerParams};
use crate::simworld::track::Track;

/// Near edge of the high-attention zone around a perceived hazard, meters.
pub const ZONE_NEAR: f64 = -5.0;
/// Far edge of the high-attention zone around a perceived hazard, meters.
pub const ZONE_FAR: f64 = 15.0;

/// Parameters of one corrupted-expert policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySpec {
    pub policy_id: String,
    /// Stdev of Gaussian noise added to each sampled steer and longitudinal
    /// command.
    pub noise: f64,
    /// Probability of ignoring each hazard outright.
    pub miss_rate: f64,
    /// Whether sample spread widens where the policy actually faces a hazard.
    pub calibrated: bool,
    /// Noise multiplier inside the attention zone when calibrated.
    pub zone_noise_mult: f64,
    /// Constant additive steer offset.
    pub bias: f64,
    /// Action samples reported per state.
    pub k: usize,
}

impl PolicySpec {
    /// The uncorrupted planner itself.
    pub fn expert() -> Self {
        PolicySpec {
            policy_id: "expert".to_string(),
            noise: 0.0,
            miss_rate: 0.0,
            calibrated: false,
            zone_noise_mult: 3.0,
            bias: 0.0,
            k: 1,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let id = &self.policy_id;
        if id.is_empty() {
            return Err("policy_id is empty".to_string());
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(format!("policy '{id}': noise {} must be >= 0", self.noise));
        }
        if !(self.miss_rate.is_finite() && (0.0..=1.0).contains(&self.miss_rate)) {
            return Err(format!("policy '{id}': miss_rate {} outside [0, 1]", self.miss_rate));
        }
        if !(self.zone_noise_mult.is_finite() && self.zone_noise_mult >= 1.0) {
            return Err(format!(
                "policy '{id}': zone_noise_mult {} must be >= 1",
                self.zone_noise_mult
            ));
        }
        if !(self.bias.is_finite() && self.bias.abs() <= 1.0) {
            return Err(format!("policy '{id}': bias {} outside [-1, 1]", self.bias));
        }
        if self.k == 0 {
            return Err(format!("policy '{id}': k must be >= 1"));
        }
        Ok(())
    }
}

/// One control decision: the K reported samples and the action the vehicle
/// actually executes (their clamped component-wise mean).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub samples: Vec<Action>,
    pub executed: Action,
}

/// A policy instantiated on one track: fixed miss mask plus a noise stream.
pub struct CorruptedPolicy<'a> {
    spec: &'a PolicySpec,
    planner: PlannerParams,
    miss_mask: Vec<bool>,
    noise_rng: ChaCha8Rng,
}

impl<'a> CorruptedPolicy<'a> {
    pub fn new(spec: &'a PolicySpec, track: &Track, planner: PlannerParams, seed: u64) -> Self {
        let mut miss_rng = ChaCha8Rng::seed_from_u64(derive_seed(
            seed,
            &["miss", &spec.policy_id, &track.track_id],
        ));
        let miss_mask = track
            .hazards
            .iter()
            .map(|_| miss_rng.random_bool(spec.miss_rate))
            .collect();
        let noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(
            seed,
            &["noise", &spec.policy_id, &track.track_id],
        ));
        CorruptedPolicy { spec, planner, miss_mask, noise_rng }
    }

    /// Whether this policy ignores the track's hazard `index`.
    pub fn misses(&self, index: usize) -> bool {
        self.miss_mask.get(index).copied().unwrap_or(false)
    }

    /// Decide at one state. `views` are the true hazard views; the policy
    /// first drops the ones it misses, then plans and corrupts.
    pub fn act(&mut self, centerline: &Polyline, ego: &EgoState, views: &[HazardView]) -> PolicyOutput {
        let kept: Vec<HazardView> =
            views.iter().filter(|v| !self.misses(v.index)).copied().collect();
        let base = plan(centerline, ego, &kept, &self.planner);

        let in_zone = kept.iter().any(|v| (ZONE_NEAR..=ZONE_FAR).contains(&v.dist_ahead));
        let sigma = self.spec.noise
            * if self.spec.calibrated && in_zone { self.spec.zone_noise_mult } else { 1.0 };

        let mut samples = Vec::with_capacity(self.spec.k);
        for _ in 0..self.spec.k {
            let (dsteer, dlong) = if sigma > 0.0 {
                let zs: f64 = self.noise_rng.sample(StandardNormal);
                let zl: f64 = self.noise_rng.sample(StandardNormal);
                (sigma * zs, sigma * zl)
            } else {
                (0.0, 0.0)
            };
            let steer = base.steer + self.spec.bias + dsteer;
            let long = base.longitudinal() + dlong;
            samples.push(Action::new(steer, long.max(0.0), (-long).max(0.0)).clamped());
        }
        let executed = derive_executed_action(&samples);
        PolicyOutput { samples, executed }
    }
}

// ── File io ──────────────────────────────────────────────────────────────────

/// Canonical text form: one policy per line, fixed key order, sig9 floats.
pub fn policies_canonical_string(specs: &[PolicySpec]) -> String {
    let mut out = String::new();
    for s in specs {
        let _ = writeln!(
            out,
            "{{\"policy_id\":{},\"noise\":{},\"miss_rate\":{},\"calibrated\":{},\"zone_noise_mult\":{},\"bias\":{},\"k\":{}}}",
            serde_json::to_string(&s.policy_id).expect("string encodes"),
            sig9(s.noise),
            sig9(s.miss_rate),
            s.calibrated,
            sig9(s.zone_noise_mult),
            sig9(s.bias),
            s.k
        );
    }
    out
}

fn parse_policy(value: &Value) -> Result<PolicySpec, String> {
    let m = match value {
        Value::Object(m) => m,
        other => return Err(format!("expected object, got {}", kind_name(other))),
    };
    let calibrated = m
        .get("calibrated")
        .and_then(Value::as_bool)
        .ok_or_else(|| "calibrated: expected bool".to_string())?;
    let spec = PolicySpec {
        policy_id: get_str(m, "policy_id")?,
        noise: get_f64(m, "noise")?,
        miss_rate: get_f64(m, "miss_rate")?,
        calibrated,
        zone_noise_mult: get_f64(m, "zone_noise_mult")?,
        bias: get_f64(m, "bias")?,
        k: get_usize(m, "k")?,
    };
    spec.validate()?;
    Ok(spec)
}

/// Parse a policies file (one JSON object per line).
pub fn read_policies_str(text: &str, label: &str) -> Result<Vec<PolicySpec>, DataError> {
    let mut specs: Vec<PolicySpec> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| DataError::Line {
            path: label.to_string(),
            line: lineno,
            msg: format!("invalid JSON: {e}"),
        })?;
        let spec = parse_policy(&value).map_err(|msg| DataError::Line {
            path: label.to_string(),
            line: lineno,
            msg,
        })?;
        if specs.iter().any(|s| s.policy_id == spec.policy_id) {
            return Err(DataError::Line {
                path: label.to_string(),
                line: lineno,
                msg: format!("duplicate policy_id '{}'", spec.policy_id),
            });
        }
        specs.push(spec);
    }
    if specs.is_empty() {
        return Err(DataError::File { path: label.to_string(), msg: "no policies".to_string() });
    }
    Ok(specs)
}

pub fn read_policies(path: &Path) -> Result<Vec<PolicySpec>, DataError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
    read_policies_str(&text, &path.display().to_string())
}

pub fn write_policies(specs: &[PolicySpec], path: &Path) -> Result<(), DataError> {
    std::fs::write(path, policies_canonical_string(specs))
        .map_err(|source| DataError::Io { path: path.display().to_string(), source })
}
