//! Run configuration: one TOML file covering every pipeline stage, with
//! defaults for every key, strict unknown-key rejection, and dotted-path
//! overrides (`section.key=value`) applied before parsing. Also owns the
//! on-disk form of fitted UWE weights (`uwe.toml`), written with exact
//! round-trip floats so reloading reproduces the weights bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::offline::{kernel_by_name, metric_by_name, KernelParams};
use crate::online::{online_metric_names, PenaltyTable};
use crate::uncertainty::{UncertaintyTarget, UweConfig, DEFAULT_GAMMAS};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config '{path}': {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {label}: {message}")]
    Parse { label: String, message: String },
    #[error("override '{set}': {message}")]
    Override { set: String, message: String },
    #[error("config: {0}")]
    Invalid(String),
}

// ── Sections ─────────────────────────────────────────────────────────────────

/// Input/output locations. Unset inputs fall back to the bundled study.
#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Track file for `simulate`; bundled catalogue when unset.
    pub tracks: Option<PathBuf>,
    /// Policy family file for `simulate`; bundled grid when unset.
    pub policies: Option<PathBuf>,
    /// Dataset for `score-offline` when no positional path is given.
    pub dataset: Option<PathBuf>,
    /// Episode log for `score-online` when no positional path is given.
    pub episodes: Option<PathBuf>,
    /// Study directory written by `simulate` and read by later stages.
    pub out: Option<PathBuf>,
}


#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    /// Master seed; every stochastic stream is derived from it.
    pub seed: u64,
    /// Action samples per record drawn by the bundled policy family.
    pub samples: usize,
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection { seed: 42, samples: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfflineSection {
    /// Include waypoint kernels in the default catalogue.
    pub waypoints: bool,
    /// Also report the raw form of weighted metrics (`<name>_raw`).
    pub include_raw: bool,
    /// Steer quantization band half-width.
    pub qce_sigma: f64,
    /// Relative-error threshold fraction.
    pub tre_lambda: f64,
    /// Exponent used by standalone `uw_*` catalogue metrics.
    pub uw_gamma: f64,
    /// Explicit metric selection; the canonical catalogue when unset.
    pub metrics: Option<Vec<String>>,
}

impl Default for OfflineSection {
    fn default() -> Self {
        OfflineSection {
            waypoints: false,
            include_raw: false,
            qce_sigma: 0.5,
            tre_lambda: 0.1,
            uw_gamma: 1.0,
            metrics: None,
        }
    }
}

/// Which prediction channels the per-record variance is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetChoice {
    Steer,
    Action,
    Waypoints,
}

impl From<TargetChoice> for UncertaintyTarget {
    fn from(c: TargetChoice) -> Self {
        match c {
            TargetChoice::Steer => UncertaintyTarget::Steer,
            TargetChoice::Action => UncertaintyTarget::Action,
            TargetChoice::Waypoints => UncertaintyTarget::Waypoints,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintySection {
    pub target: TargetChoice,
}

impl Default for UncertaintySection {
    fn default() -> Self {
        UncertaintySection { target: TargetChoice::Action }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// Candidate exponents searched during fitting.
    pub gamma_grid: Vec<f64>,
    /// Fraction of policies used for fitting; the rest validate the weights.
    pub train_fraction: f64,
    /// Base kernels offered to the regression.
    pub metrics: Vec<String>,
    /// Online metric the weights are fitted against.
    pub target: String,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            gamma_grid: DEFAULT_GAMMAS.to_vec(),
            train_fraction: 0.7,
            metrics: ["steer_mae", "steer_mse", "action_mae", "action_mse", "throttle_mae", "qce", "tre"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            target: "driving_score".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltySection {
    pub pedestrian: f64,
    pub vehicle: f64,
    #[serde(rename = "static")]
    pub static_obstacle: f64,
    pub red_light: f64,
    pub stop_sign: f64,
}

impl Default for PenaltySection {
    fn default() -> Self {
        PenaltySection {
            pedestrian: 0.50,
            vehicle: 0.60,
            static_obstacle: 0.65,
            red_light: 0.70,
            stop_sign: 0.80,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineSection {
    pub penalties: PenaltySection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelationSection {
    /// Bootstrap resample count for confidence intervals.
    pub bootstrap: usize,
    /// Two-sided interval coverage.
    pub confidence: f64,
    /// Online metric that orders the correlation report.
    pub primary: String,
}

impl Default for CorrelationSection {
    fn default() -> Self {
        CorrelationSection { bootstrap: 1000, confidence: 0.95, primary: "driving_score".to_string() }
    }
}

/// Fixed UWE weights: the `[uwe]` config section and the `uwe.toml` artifact
/// share this shape.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedUwe {
    pub gamma: f64,
    pub beta: BTreeMap<String, f64>,
}

impl FixedUwe {
    /// Weights in name order (the map is already sorted).
    pub fn to_uwe(&self) -> UweConfig {
        UweConfig {
            gamma: self.gamma,
            betas: self.beta.iter().map(|(k, v)| (k.clone(), *v)).collect(),
        }
    }
}

// ── Top level ────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub paths: PathsSection,
    pub study: StudySection,
    pub offline: OfflineSection,
    pub uncertainty: UncertaintySection,
    pub fit: FitSection,
    /// Fixed weights; when set, `correlate` uses them instead of fitting.
    pub uwe: Option<FixedUwe>,
    pub online: OnlineSection,
    pub correlation: CorrelationSection,
}

impl StudyConfig {
    pub fn kernel_params(&self) -> KernelParams {
        KernelParams {
            qce_sigma: self.offline.qce_sigma,
            tre_lambda: self.offline.tre_lambda,
            uw_gamma: self.offline.uw_gamma,
        }
    }

    pub fn penalty_table(&self) -> PenaltyTable {
        PenaltyTable {
            collision_pedestrian: self.online.penalties.pedestrian,
            collision_vehicle: self.online.penalties.vehicle,
            collision_static: self.online.penalties.static_obstacle,
            red_light: self.online.penalties.red_light,
            stop_sign: self.online.penalties.stop_sign,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError::Invalid(m));
        if self.study.samples == 0 {
            return err("study.samples must be at least 1".to_string());
        }
        if !(self.offline.qce_sigma.is_finite() && self.offline.qce_sigma > 0.0) {
            return err(format!("offline.qce_sigma {} must be finite and > 0", self.offline.qce_sigma));
        }
        if !(self.offline.tre_lambda.is_finite() && self.offline.tre_lambda >= 0.0) {
            return err(format!("offline.tre_lambda {} must be finite and >= 0", self.offline.tre_lambda));
        }
        if !(self.offline.uw_gamma.is_finite() && self.offline.uw_gamma >= 0.0) {
            return err(format!("offline.uw_gamma {} must be finite and >= 0", self.offline.uw_gamma));
        }
        let params = self.kernel_params();
        if let Some(names) = &self.offline.metrics {
            if names.is_empty() {
                return err("offline.metrics must not be empty".to_string());
            }
            for name in names {
                if metric_by_name(name, &params).is_none() {
                    return err(format!("offline.metrics: unknown metric '{name}'"));
                }
            }
        }
        if self.fit.gamma_grid.is_empty() {
            return err("fit.gamma_grid must not be empty".to_string());
        }
        for g in &self.fit.gamma_grid {
            if !(g.is_finite() && *g >= 0.0) {
                return err(format!("fit.gamma_grid entry {g} must be finite and >= 0"));
            }
        }
        if !(self.fit.train_fraction > 0.0 && self.fit.train_fraction <= 1.0) {
            return err(format!("fit.train_fraction {} must be in (0, 1]", self.fit.train_fraction));
        }
        if self.fit.metrics.is_empty() {
            return err("fit.metrics must not be empty".to_string());
        }
        for name in &self.fit.metrics {
            if kernel_by_name(name, &params).is_none() {
                return err(format!("fit.metrics: '{name}' is not a base kernel name"));
            }
        }
        if !online_metric_names().contains(&self.fit.target.as_str()) {
            return err(format!("fit.target: unknown online metric '{}'", self.fit.target));
        }
        if let Some(fixed) = &self.uwe {
            fixed.to_uwe().validate(&params).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        self.penalty_table()
            .validate()
            .map_err(|m| ConfigError::Invalid(format!("online.penalties: {m}")))?;
        if self.correlation.bootstrap == 0 {
            return err("correlation.bootstrap must be at least 1".to_string());
        }
        if !(self.correlation.confidence > 0.0 && self.correlation.confidence < 1.0) {
            return err(format!(
                "correlation.confidence {} must be in (0, 1)",
                self.correlation.confidence
            ));
        }
        if !online_metric_names().contains(&self.correlation.primary.as_str()) {
            return err(format!(
                "correlation.primary: unknown online metric '{}'",
                self.correlation.primary
            ));
        }
        Ok(())
    }
}

// ── Loading & overrides ──────────────────────────────────────────────────────

/// Parse an override value as a TOML literal, falling back to a bare string
/// so `correlation.primary=success_rate` needs no quoting.
fn parse_literal(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Value>(&doc) {
        Ok(toml::Value::Table(mut t)) => t.remove("v").expect("parsed doc binds v"),
        _ => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(root: &mut toml::Value, set: &str) -> Result<(), ConfigError> {
    let fail = |message: String| ConfigError::Override { set: set.to_string(), message };
    let (path, raw) = set
        .split_once('=')
        .ok_or_else(|| fail("expected section.key=value".to_string()))?;
    let parts: Vec<&str> = path.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(fail("empty key segment".to_string()));
    }
    let value = parse_literal(raw.trim());
    let mut cur = root;
    for part in &parts[..parts.len() - 1] {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| fail(format!("'{part}' cannot be reached through a non-table value")))?;
        cur = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let last = parts[parts.len() - 1];
    cur.as_table_mut()
        .ok_or_else(|| fail(format!("'{last}' cannot be set on a non-table value")))?
        .insert(last.to_string(), value);
    Ok(())
}

/// Load a config file (defaults when absent), apply `section.key=value`
/// overrides, then parse and validate. Unknown keys are errors.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<StudyConfig, ConfigError> {
    let (mut value, label) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|source| ConfigError::Io { path: p.to_path_buf(), source })?;
            let v: toml::Value = toml::from_str(&text).map_err(|e| ConfigError::Parse {
                label: format!("'{}'", p.display()),
                message: e.to_string(),
            })?;
            (v, format!("'{}'", p.display()))
        }
        None => (toml::Value::Table(Default::default()), "<defaults>".to_string()),
    };
    for set in overrides {
        apply_override(&mut value, set)?;
    }
    let cfg: StudyConfig = value
        .try_into()
        .map_err(|e| ConfigError::Parse { label, message: e.to_string() })?;
    cfg.validate()?;
    Ok(cfg)
}

// ── Fitted-weight artifact ───────────────────────────────────────────────────

/// Serialize UWE weights with `{:?}` floats: shortest strings that parse back
/// to the same bits, so a reload reproduces the weights exactly. Beta keys
/// are emitted in name order.
pub fn uwe_to_toml(cfg: &UweConfig) -> String {
    let mut betas = cfg.betas.clone();
    betas.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = String::new();
    let _ = writeln!(out, "gamma = {:?}", cfg.gamma);
    let _ = writeln!(out);
    let _ = writeln!(out, "[beta]");
    for (name, b) in &betas {
        let _ = writeln!(out, "{name} = {b:?}");
    }
    out
}

pub fn uwe_from_toml(text: &str, label: &str) -> Result<UweConfig, ConfigError> {
    let fixed: FixedUwe = toml::from_str(text)
        .map_err(|e| ConfigError::Parse { label: label.to_string(), message: e.to_string() })?;
    Ok(fixed.to_uwe())
}

pub fn read_uwe(path: &Path) -> Result<UweConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    uwe_from_toml(&text, &format!("'{}'", path.display()))
}

pub fn write_uwe(cfg: &UweConfig, path: &Path) -> Result<(), ConfigError> {
    std::fs::write(path, uwe_to_toml(cfg))
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_load_and_validate() {
        let cfg = load_config(None, &[]).unwrap();
        assert_eq!(cfg, StudyConfig::default());
        assert_eq!(cfg.study.seed, 42);
        assert_eq!(cfg.study.samples, 8);
        assert_eq!(cfg.correlation.bootstrap, 1000);
        assert_eq!(cfg.correlation.primary, "driving_score");
        assert_eq!(cfg.fit.metrics.len(), 7);
        assert_eq!(cfg.penalty_table(), PenaltyTable::default());
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        let mut root = toml::Value::Table(Default::default());
        apply_override(&mut root, "offline.typo=1").unwrap();
        let err = root.try_into::<StudyConfig>().unwrap_err().to_string();
        assert!(err.contains("typo"), "{err}");

        let err = load_config(None, &["nonsense.key=1".to_string()]).unwrap_err().to_string();
        assert!(err.contains("nonsense"), "{err}");
    }

    #[test]
    fn overrides_parse_each_literal_kind_and_win_over_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("study.toml");
        std::fs::write(&path, "[study]\nseed = 7\n").unwrap();
        let sets = [
            "study.seed=9".to_string(),
            "offline.include_raw=true".to_string(),
            "fit.train_fraction=0.6".to_string(),
            "fit.gamma_grid=[0.5, 1.0]".to_string(),
            "correlation.primary=success_rate".to_string(),
        ];
        let cfg = load_config(Some(&path), &sets).unwrap();
        assert_eq!(cfg.study.seed, 9);
        assert!(cfg.offline.include_raw);
        assert_eq!(cfg.fit.train_fraction, 0.6);
        assert_eq!(cfg.fit.gamma_grid, vec![0.5, 1.0]);
        assert_eq!(cfg.correlation.primary, "success_rate");
    }

    #[test]
    fn malformed_overrides_fail_loudly() {
        for set in ["no_equals", "a..b=1", "=1"] {
            let err = load_config(None, &[set.to_string()]).unwrap_err();
            assert!(matches!(err, ConfigError::Override { .. }), "{set}: {err}");
        }
        // Nesting under a scalar key materializes a table there, which the
        // typed parse then rejects.
        let err = load_config(None, &["study.seed.deeper=1".to_string()]).unwrap_err();
        assert!(matches!(err, ConfigError::Parse { .. }), "{err}");
        // A scalar already present in the file blocks the walk itself.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("study.toml");
        std::fs::write(&path, "[study]\nseed = 7\n").unwrap();
        let err = load_config(Some(&path), &["study.seed.deeper=1".to_string()]).unwrap_err();
        assert!(matches!(err, ConfigError::Override { .. }), "{err}");
    }

    #[test]
    fn validation_rejects_out_of_range_values() {
        let bad = [
            "study.samples=0",
            "offline.qce_sigma=0.0",
            "offline.tre_lambda=-0.1",
            "offline.metrics=[\"nope\"]",
            "fit.gamma_grid=[]",
            "fit.train_fraction=1.5",
            "fit.metrics=[\"uw_steer_mae\"]",
            "fit.target=not_a_metric",
            "online.penalties.vehicle=0.0",
            "correlation.bootstrap=0",
            "correlation.confidence=1.0",
            "correlation.primary=nope",
        ];
        for set in bad {
            let err = load_config(None, &[set.to_string()]).unwrap_err();
            assert!(
                matches!(err, ConfigError::Invalid(_)),
                "{set} should fail validation, got: {err}"
            );
        }
    }

    #[test]
    fn penalty_static_key_maps_onto_the_keyword_safe_field() {
        let cfg = load_config(None, &["online.penalties.static=0.5".to_string()]).unwrap();
        assert_eq!(cfg.online.penalties.static_obstacle, 0.5);
        assert_eq!(cfg.penalty_table().collision_static, 0.5);
    }

    #[test]
    fn fixed_uwe_section_feeds_the_weight_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("study.toml");
        std::fs::write(&path, "[uwe]\ngamma = 0.5\n[uwe.beta]\nsteer_mae = 0.25\nqce = 0.75\n")
            .unwrap();
        let cfg = load_config(Some(&path), &[]).unwrap();
        let uwe = cfg.uwe.unwrap().to_uwe();
        assert_eq!(uwe.gamma, 0.5);
        assert_eq!(uwe.betas, vec![("qce".to_string(), 0.75), ("steer_mae".to_string(), 0.25)]);
    }

    #[test]
    fn uwe_toml_round_trips_bit_for_bit() {
        // Dyadic weights from a real fit shape: the sum is exactly one and
        // must stay exactly one through serialization.
        let b1 = 834_793_741.0 / 4_294_967_296.0;
        let b2 = 1.0 - b1;
        let cfg = UweConfig {
            gamma: 0.25,
            betas: vec![("qce".to_string(), b2), ("action_mae".to_string(), b1)],
        };
        let text = uwe_to_toml(&cfg);
        let back = uwe_from_toml(&text, "mem").unwrap();
        assert_eq!(back.gamma.to_bits(), cfg.gamma.to_bits());
        assert_eq!(back.betas.len(), 2);
        // Reload sorts by name.
        assert_eq!(back.betas[0], ("action_mae".to_string(), b1));
        assert_eq!(back.betas[1], ("qce".to_string(), b2));
        assert_eq!(back.betas[0].1 + back.betas[1].1, 1.0);
        // Integral floats keep a float shape on disk.
        let text = uwe_to_toml(&UweConfig {
            gamma: 1.0,
            betas: vec![("qce".to_string(), 1.0)],
        });
        assert!(text.contains("gamma = 1.0"), "{text}");
        let back = uwe_from_toml(&text, "mem").unwrap();
        assert_eq!(back.gamma, 1.0);
    }
}
