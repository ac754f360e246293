//! File-based pipeline stages behind the command-line interface. Each stage
//! reads documented artifacts from a study directory and writes new ones, so
//! any stage can be rerun independently. Errors carry their exit class:
//! configuration and input-shape problems exit 2, evaluation failures exit 3.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::config::{read_uwe, uwe_to_toml, ConfigError, StudyConfig};
use crate::correlation::{
    correlate, report_csv, scatter_csv, scatter_svg, CorrelateOptions, PolicyFamilyTable,
    PolicyRow, TableError,
};
use crate::datamodel::{read_dataset, DataError};
use crate::numeric::sig9;
use crate::offline::{
    aggregate, canonical_catalogue, kernel_by_name, metric_by_name, metric_report, LossKernel,
    MetricError, MetricSpec, WeightScheme,
};
use crate::online::{online_metric_names, read_episodes, score_set, OnlineReport, ScoreError};
use crate::simworld::planner::PlannerParams;
use crate::simworld::policy::read_policies;
use crate::simworld::rollout::SimParams;
use crate::simworld::study::{load_study, run_study_with, Study, StudyError, StudyOptions};
use crate::simworld::track::read_tracks;
use crate::simworld::bundle::{bundled_family, bundled_tracks};
use crate::uncertainty::{estimate, fit_uwe, uwe, FitDiagnostics, FitInput, FitOptions, FitRow, UweConfig, UweError};

// ── Errors & exit classes ────────────────────────────────────────────────────

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    /// Violated precondition or input shape; same exit class as config errors.
    #[error("{0}")]
    Usage(String),
    /// Evaluation failed on otherwise well-formed inputs.
    #[error("{0}")]
    Runtime(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Data(_) | PipelineError::Usage(_) => 2,
            PipelineError::Runtime(_) => 3,
        }
    }
}

impl From<StudyError> for PipelineError {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::Data(d) => PipelineError::Data(d),
            StudyError::Invalid(m) => PipelineError::Usage(m),
        }
    }
}

impl From<MetricError> for PipelineError {
    fn from(e: MetricError) -> Self {
        PipelineError::Runtime(e.to_string())
    }
}

impl From<ScoreError> for PipelineError {
    fn from(e: ScoreError) -> Self {
        PipelineError::Usage(e.to_string())
    }
}

impl From<TableError> for PipelineError {
    fn from(e: TableError) -> Self {
        PipelineError::Usage(e.to_string())
    }
}

impl From<UweError> for PipelineError {
    fn from(e: UweError) -> Self {
        match e {
            UweError::Degenerate(_) => PipelineError::Runtime(e.to_string()),
            other => PipelineError::Usage(other.to_string()),
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    std::fs::write(path, text)
        .map_err(|e| PipelineError::Runtime(format!("cannot write '{}': {e}", path.display())))
}

/// What a stage produced: artifact paths in write order, stderr-worthy notes,
/// and a one-line outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub files: Vec<PathBuf>,
    pub notes: Vec<String>,
    pub summary: String,
}

// ── simulate ─────────────────────────────────────────────────────────────────

/// Generate a study directory: tracks, policies, expert ground truth,
/// per-policy predictions and episode logs, and the hashing manifest.
pub fn cmd_simulate(cfg: &StudyConfig, out: &Path) -> Result<StageReport, PipelineError> {
    let tracks = match &cfg.paths.tracks {
        Some(p) => read_tracks(p)?,
        None => bundled_tracks(),
    };
    let specs = match &cfg.paths.policies {
        Some(p) => read_policies(p)?,
        None => bundled_family(cfg.study.samples),
    };
    let opts = StudyOptions {
        seed: cfg.study.seed,
        k: cfg.study.samples,
        planner: PlannerParams::default(),
        sim: SimParams::default(),
    };
    let manifest = run_study_with(out, &opts, &tracks, &specs)?;
    let mut files: Vec<PathBuf> = manifest.artifacts.iter().map(|a| out.join(&a.path)).collect();
    files.push(out.join("manifest.json"));
    let summary = format!(
        "study '{}': {} policies x {} tracks, seed {}, {} artifacts",
        out.display(),
        specs.len(),
        tracks.len(),
        cfg.study.seed,
        files.len(),
    );
    Ok(StageReport { files, notes: Vec::new(), summary })
}

// ── score-offline ────────────────────────────────────────────────────────────

/// The catalogue a config selects, minus uncertainty-weighted entries when the
/// dataset cannot support them (`degenerate` = zero variance everywhere).
/// Explicit selections are never trimmed: asking for the impossible errors.
fn select_catalogue(
    cfg: &StudyConfig,
    degenerate: bool,
    notes: &mut Vec<String>,
) -> Vec<MetricSpec> {
    let params = cfg.kernel_params();
    match &cfg.offline.metrics {
        Some(names) => names
            .iter()
            .map(|n| metric_by_name(n, &params).expect("names validated at config load"))
            .collect(),
        None => {
            let mut cat = canonical_catalogue(cfg.offline.waypoints, &params);
            if degenerate {
                cat.retain(|s| !matches!(s.scheme, WeightScheme::Uncertainty { .. }));
                notes.push(
                    "predictive variance is zero everywhere; skipping uncertainty-weighted metrics"
                        .to_string(),
                );
            }
            cat
        }
    }
}

/// Offline metric report for one dataset, as `policy_id,metric,value` CSV.
pub fn cmd_score_offline(
    cfg: &StudyConfig,
    dataset: &Path,
) -> Result<(String, Vec<String>), PipelineError> {
    let (ds, mut notes) = read_dataset(dataset)?;
    let unc = estimate(&ds, cfg.uncertainty.target.into())?;
    let degenerate = unc.values.iter().all(|&u| u == 0.0);
    let catalogue = select_catalogue(cfg, degenerate, &mut notes);
    let pid = ds.header.policy_id.clone().unwrap_or_else(|| "dataset".to_string());
    let report = metric_report(&ds, &catalogue, Some(&unc.values), cfg.offline.include_raw, &pid)?;
    let mut csv = String::from("policy_id,metric,value\n");
    for (name, value) in &report.entries {
        csv.push_str(&format!("{},{},{}\n", report.policy_id, name, sig9(*value)));
    }
    Ok((csv, notes))
}

// ── score-online ─────────────────────────────────────────────────────────────

/// Online score report for one episode log, as `policy_id,metric,value` CSV.
/// Logs may mix policies; each gets its own score set. Undefined per-distance
/// rates leave the value cell empty.
pub fn cmd_score_online(cfg: &StudyConfig, episodes: &Path) -> Result<String, PipelineError> {
    let logs = read_episodes(episodes)?;
    let table = cfg.penalty_table();
    let mut by_policy: std::collections::BTreeMap<String, Vec<_>> = Default::default();
    for log in logs {
        by_policy.entry(log.policy_id.clone()).or_default().push(log);
    }
    let mut csv = String::from("policy_id,metric,value\n");
    for (pid, logs) in &by_policy {
        let report = score_set(pid, logs, &table)?;
        for (name, value) in &report.entries {
            let cell = value.map(sig9).unwrap_or_default();
            csv.push_str(&format!("{pid},{name},{cell}\n"));
        }
    }
    Ok(csv)
}

// ── Shared study analysis ────────────────────────────────────────────────────

/// Per-policy evaluation products every study-level stage shares, aligned
/// with `study.predictions`.
struct StudyAnalysis {
    uncertainties: Vec<Vec<f64>>,
    offline: Vec<Vec<(String, f64)>>,
    online: Vec<OnlineReport>,
    notes: Vec<String>,
}

fn analyze(cfg: &StudyConfig, study: &Study, include_raw: bool) -> Result<StudyAnalysis, PipelineError> {
    let target = cfg.uncertainty.target.into();
    let uncertainties: Vec<Vec<f64>> = study
        .predictions
        .par_iter()
        .map(|(pid, ds)| {
            estimate(ds, target)
                .map(|u| u.values)
                .map_err(|e| PipelineError::Runtime(format!("policy '{pid}': {e}")))
        })
        .collect::<Result<_, _>>()?;

    let degenerate = uncertainties.iter().any(|u| u.iter().all(|&v| v == 0.0));
    let mut notes = Vec::new();
    let catalogue = select_catalogue(cfg, degenerate, &mut notes);
    let ptable = cfg.penalty_table();

    let per_policy: Vec<(Vec<(String, f64)>, OnlineReport)> = study
        .predictions
        .par_iter()
        .zip(&uncertainties)
        .map(|((pid, ds), unc)| {
            let report = metric_report(ds, &catalogue, Some(unc), include_raw, pid)
                .map_err(|e| PipelineError::Runtime(format!("policy '{pid}': {e}")))?;
            let logs = study
                .episodes
                .iter()
                .find(|(p, _)| p == pid)
                .ok_or_else(|| {
                    PipelineError::Usage(format!("policy '{pid}' has predictions but no episodes"))
                })?;
            let online = score_set(pid, &logs.1, &ptable)?;
            Ok((report.entries, online))
        })
        .collect::<Result<_, PipelineError>>()?;

    let (offline, online) = per_policy.into_iter().unzip();
    Ok(StudyAnalysis { uncertainties, offline, online, notes })
}

fn online_higher_is_better(name: &str) -> bool {
    matches!(name, "driving_score" | "success_rate" | "route_completion")
}

fn fit_input(cfg: &StudyConfig, study: &Study, analysis: &StudyAnalysis) -> Result<FitInput, PipelineError> {
    let params = cfg.kernel_params();
    let kernels: Vec<LossKernel> = cfg
        .fit
        .metrics
        .iter()
        .map(|n| kernel_by_name(n, &params).expect("names validated at config load"))
        .collect();
    let higher_better = online_higher_is_better(&cfg.fit.target);
    let mut rows = Vec::with_capacity(study.predictions.len());
    for (i, (pid, pred)) in study.predictions.iter().enumerate() {
        let v = analysis.online[i].value(&cfg.fit.target).ok_or_else(|| {
            PipelineError::Runtime(format!(
                "online metric '{}' is undefined for policy '{pid}'; cannot fit against it",
                cfg.fit.target
            ))
        })?;
        // The regression wants lower-is-better targets, like the error metrics.
        let target = if higher_better { -v } else { v };
        let mut metrics_by_gamma = Vec::with_capacity(cfg.fit.gamma_grid.len());
        for &gamma in &cfg.fit.gamma_grid {
            let mut vals = Vec::with_capacity(kernels.len());
            for kernel in &kernels {
                let v = aggregate(pred, kernel, WeightScheme::Uncertainty { gamma }, Some(&analysis.uncertainties[i]))
                    .map_err(|e| PipelineError::Runtime(format!("policy '{pid}': {e}")))?;
                vals.push(v);
            }
            metrics_by_gamma.push(vals);
        }
        rows.push(FitRow { policy_id: pid.clone(), target, metrics_by_gamma });
    }
    Ok(FitInput {
        metric_names: cfg.fit.metrics.clone(),
        gammas: cfg.fit.gamma_grid.clone(),
        rows,
    })
}

// ── fit-uwe ──────────────────────────────────────────────────────────────────

fn diagnostics_json(diag: &FitDiagnostics, train_fraction: f64) -> String {
    let per_gamma: Vec<_> = diag
        .per_gamma
        .iter()
        .map(|g| {
            json!({
                "gamma": g.gamma,
                "in_sample_r": g.in_sample_r,
                "held_out_r": g.held_out_r,
                "kept": g.kept,
                "betas": g.betas,
                "dropped": g.dropped.iter().map(|d| json!({"metric": d.metric, "reason": d.reason})).collect::<Vec<_>>(),
                "fallback": g.fallback,
            })
        })
        .collect();
    let doc = json!({
        "chosen_gamma": diag.chosen_gamma,
        "in_sample_r": diag.in_sample_r,
        "held_out_r": diag.held_out_r,
        "train_fraction": train_fraction,
        "train_policies": diag.train_ids,
        "held_out_policies": diag.held_out_ids,
        "flags": diag.flags,
        "per_gamma": per_gamma,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("diagnostics encode");
    text.push('\n');
    text
}

/// Fit UWE weights on a study and write `uwe.toml` + `fit_diagnostics.json`.
pub fn cmd_fit_uwe(cfg: &StudyConfig, study_dir: &Path) -> Result<StageReport, PipelineError> {
    let study = load_study(study_dir)?;
    let analysis = analyze(cfg, &study, false)?;
    let input = fit_input(cfg, &study, &analysis)?;
    let opts = FitOptions { train_fraction: cfg.fit.train_fraction };
    let (mut ucfg, diag) = fit_uwe(&input, &opts)?;
    // Name order on disk; evaluation follows file order, so sort before use.
    ucfg.betas.sort_by(|a, b| a.0.cmp(&b.0));

    let uwe_path = study_dir.join("uwe.toml");
    write_text(&uwe_path, &uwe_to_toml(&ucfg))?;
    let diag_path = study_dir.join("fit_diagnostics.json");
    write_text(&diag_path, &diagnostics_json(&diag, opts.train_fraction))?;

    let mut notes = analysis.notes;
    notes.extend(diag.flags.iter().map(|f| format!("fit flag: {f}")));
    let held = diag
        .held_out_r
        .map(|r| format!(", held-out r {}", sig9(r)))
        .unwrap_or_default();
    let summary = format!(
        "fitted {} weights at gamma {}: in-sample r {}{held}",
        ucfg.betas.len(),
        sig9(diag.chosen_gamma),
        sig9(diag.in_sample_r),
    );
    Ok(StageReport { files: vec![uwe_path, diag_path], notes, summary })
}

// ── correlate ────────────────────────────────────────────────────────────────

/// Weight source for `correlate`: a previously fitted `uwe.toml` in the study
/// directory, else fixed weights from the config, else a fresh in-memory fit.
fn resolve_uwe(
    cfg: &StudyConfig,
    study_dir: &Path,
    study: &Study,
    analysis: &StudyAnalysis,
) -> Result<(UweConfig, String), PipelineError> {
    let params = cfg.kernel_params();
    let path = study_dir.join("uwe.toml");
    if path.exists() {
        let ucfg = read_uwe(&path)?;
        ucfg.validate(&params).map_err(|e| PipelineError::Usage(e.to_string()))?;
        return Ok((ucfg, format!("weights from '{}'", path.display())));
    }
    if let Some(fixed) = &cfg.uwe {
        return Ok((fixed.to_uwe(), "fixed weights from config".to_string()));
    }
    let input = fit_input(cfg, study, analysis)?;
    let (mut ucfg, _) = fit_uwe(&input, &FitOptions { train_fraction: cfg.fit.train_fraction })?;
    ucfg.betas.sort_by(|a, b| a.0.cmp(&b.0));
    Ok((ucfg, "weights fitted in memory (no uwe.toml in study)".to_string()))
}

fn uwe_column(
    study: &Study,
    analysis: &StudyAnalysis,
    ucfg: &UweConfig,
    cfg: &StudyConfig,
) -> Result<Vec<f64>, PipelineError> {
    let params = cfg.kernel_params();
    study
        .predictions
        .iter()
        .zip(&analysis.uncertainties)
        .map(|((pid, ds), unc)| {
            uwe(ds, ucfg, &params, unc)
                .map_err(|e| PipelineError::Runtime(format!("policy '{pid}': {e}")))
        })
        .collect()
}

/// Online metrics defined for every policy, in canonical order.
fn common_online_names(analysis: &StudyAnalysis) -> Vec<String> {
    online_metric_names()
        .iter()
        .filter(|n| analysis.online.iter().all(|r| r.value(n).is_some()))
        .map(|n| n.to_string())
        .collect()
}

fn family_table(
    study: &Study,
    analysis: &StudyAnalysis,
    uwe_vals: &[f64],
    online_names: &[String],
) -> Result<PolicyFamilyTable, PipelineError> {
    let rows: Vec<PolicyRow> = study
        .predictions
        .iter()
        .enumerate()
        .map(|(i, (pid, _))| {
            let mut offline = analysis.offline[i].clone();
            offline.push(("uwe".to_string(), uwe_vals[i]));
            let online = online_names
                .iter()
                .map(|n| (n.clone(), analysis.online[i].value(n).expect("common name")))
                .collect();
            PolicyRow { policy_id: pid.clone(), offline, online }
        })
        .collect();
    Ok(PolicyFamilyTable::new(rows)?)
}

/// Correlate every offline metric (catalogue + UWE) with every online metric
/// defined for all policies; write the report CSV and per-metric scatter data.
pub fn cmd_correlate(cfg: &StudyConfig, study_dir: &Path, svg: bool) -> Result<StageReport, PipelineError> {
    let study = load_study(study_dir)?;
    // Correlation always runs on normalized metric forms.
    let analysis = analyze(cfg, &study, false)?;
    let (ucfg, source) = resolve_uwe(cfg, study_dir, &study, &analysis)?;
    let uwe_vals = uwe_column(&study, &analysis, &ucfg, cfg)?;
    let online_names = common_online_names(&analysis);
    let primary = cfg.correlation.primary.clone();
    if !online_names.contains(&primary) {
        return Err(PipelineError::Usage(format!(
            "primary online metric '{primary}' is undefined for at least one policy"
        )));
    }
    let table = family_table(&study, &analysis, &uwe_vals, &online_names)?;
    let opts = CorrelateOptions {
        resamples: cfg.correlation.bootstrap,
        alpha: 1.0 - cfg.correlation.confidence,
        seed: cfg.study.seed,
        primary,
    };
    let report = correlate(&table, &opts);

    let corr_path = study_dir.join("correlations.csv");
    write_text(&corr_path, &report_csv(&report))?;
    let mut files = vec![corr_path];

    let scatter_dir = study_dir.join("scatter");
    std::fs::create_dir_all(&scatter_dir)
        .map_err(|e| PipelineError::Runtime(format!("cannot create '{}': {e}", scatter_dir.display())))?;
    for name in &table.offline_names {
        let stem = format!("{name}_vs_{}", report.primary);
        let csv = scatter_csv(&table, name, &report.primary).expect("names from table");
        let path = scatter_dir.join(format!("{stem}.csv"));
        write_text(&path, &csv)?;
        files.push(path);
        if svg {
            let plot = scatter_svg(&table, name, &report.primary).expect("names from table");
            let path = scatter_dir.join(format!("{stem}.svg"));
            write_text(&path, &plot)?;
            files.push(path);
        }
    }

    let mut notes = analysis.notes.clone();
    notes.push(source);
    let strongest = &report.cells[0];
    let summary = format!(
        "{} policies, {} offline x {} online metrics; strongest vs {}: {} (|r| = {})",
        table.policy_ids.len(),
        table.offline_names.len(),
        table.online_names.len(),
        report.primary,
        strongest.offline_metric,
        strongest.pearson.map(|r| sig9(r.abs())).unwrap_or_default(),
    );
    Ok(StageReport { files, notes, summary })
}

// ── report ───────────────────────────────────────────────────────────────────

fn offline_table_csv(study: &Study, analysis: &StudyAnalysis, uwe_vals: &[f64]) -> String {
    let mut csv = String::from("policy_id");
    for (name, _) in &analysis.offline[0] {
        csv.push_str(&format!(",{name}"));
    }
    csv.push_str(",uwe\n");
    for (i, (pid, _)) in study.predictions.iter().enumerate() {
        csv.push_str(pid);
        for (_, v) in &analysis.offline[i] {
            csv.push_str(&format!(",{}", sig9(*v)));
        }
        csv.push_str(&format!(",{}\n", sig9(uwe_vals[i])));
    }
    csv
}

fn online_table_csv(analysis: &StudyAnalysis) -> String {
    let mut csv = String::from("policy_id");
    for name in online_metric_names() {
        csv.push_str(&format!(",{name}"));
    }
    csv.push('\n');
    for report in &analysis.online {
        csv.push_str(&report.policy_id);
        for (_, v) in &report.entries {
            csv.push_str(&format!(",{}", v.map(sig9).unwrap_or_default()));
        }
        csv.push('\n');
    }
    csv
}

/// Full analysis over a study directory: fit weights, emit both metric
/// tables, and correlate. Byte-identical across reruns and thread counts.
pub fn cmd_report(cfg: &StudyConfig, study_dir: &Path, svg: bool) -> Result<StageReport, PipelineError> {
    let fit_stage = cmd_fit_uwe(cfg, study_dir)?;

    let study = load_study(study_dir)?;
    let analysis = analyze(cfg, &study, cfg.offline.include_raw)?;
    // Read the weights back so this path shares bytes with `correlate`.
    let ucfg = read_uwe(&study_dir.join("uwe.toml"))?;
    let uwe_vals = uwe_column(&study, &analysis, &ucfg, cfg)?;

    let offline_path = study_dir.join("offline_table.csv");
    write_text(&offline_path, &offline_table_csv(&study, &analysis, &uwe_vals))?;
    let online_path = study_dir.join("online_table.csv");
    write_text(&online_path, &online_table_csv(&analysis))?;

    let corr_stage = cmd_correlate(cfg, study_dir, svg)?;

    let mut files = fit_stage.files;
    files.push(offline_path);
    files.push(online_path);
    files.extend(corr_stage.files);
    let mut notes = fit_stage.notes;
    notes.push(fit_stage.summary);
    notes.extend(corr_stage.notes);
    Ok(StageReport { files, notes, summary: corr_stage.summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simworld::study::run_study;

    fn tiny_cfg() -> StudyConfig {
        let mut cfg = StudyConfig::default();
        cfg.study.samples = 4;
        cfg.correlation.bootstrap = 50;
        cfg
    }

    /// One shared small-but-real study for the stage tests below.
    fn study_dir() -> (tempfile::TempDir, StudyConfig) {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg();
        let opts = StudyOptions { k: cfg.study.samples, ..StudyOptions::default() };
        run_study(dir.path(), &opts).unwrap();
        (dir, cfg)
    }

    #[test]
    fn score_offline_reports_the_expert_dataset_without_uw_metrics() {
        let (dir, cfg) = study_dir();
        let (csv, notes) = cmd_score_offline(&cfg, &dir.path().join("gt.jsonl")).unwrap();
        // Ground truth carries one sample per record: variance is zero, so
        // the uncertainty-weighted catalogue entries are skipped with a note.
        assert!(notes.iter().any(|n| n.contains("skipping uncertainty-weighted")));
        assert!(csv.starts_with("policy_id,metric,value\n"));
        assert!(csv.contains("expert,steer_mae,0\n"), "{csv}");
        assert!(csv.contains("expert,qce,0\n"));
        assert!(!csv.contains("uw_steer_mae"));
    }

    #[test]
    fn score_online_groups_policies_and_leaves_undefined_rates_empty() {
        let (dir, cfg) = study_dir();
        let csv = cmd_score_online(&cfg, &dir.path().join("episodes/n0.05_m0_unc.jsonl")).unwrap();
        assert!(csv.contains("n0.05_m0_unc,driving_score,1\n"), "{csv}");
        assert!(csv.contains("n0.05_m0_unc,success_rate,1\n"));
    }

    #[test]
    fn fit_then_correlate_then_report_share_artifacts() {
        let (dir, cfg) = study_dir();
        let fit = cmd_fit_uwe(&cfg, dir.path()).unwrap();
        assert_eq!(fit.files.len(), 2);
        let uwe_text = std::fs::read_to_string(dir.path().join("uwe.toml")).unwrap();
        let corr = cmd_correlate(&cfg, dir.path(), false).unwrap();
        assert!(corr.files[0].ends_with("correlations.csv"));
        let corr_text = std::fs::read_to_string(dir.path().join("correlations.csv")).unwrap();

        // report = fit + tables + correlate; refitting reproduces the same
        // weights, so the shared artifacts are byte-identical.
        let rep = cmd_report(&cfg, dir.path(), false).unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join("uwe.toml")).unwrap(), uwe_text);
        assert_eq!(
            std::fs::read_to_string(dir.path().join("correlations.csv")).unwrap(),
            corr_text
        );
        let offline = std::fs::read_to_string(dir.path().join("offline_table.csv")).unwrap();
        assert!(offline.starts_with("policy_id,steer_mse,"), "{offline}");
        assert!(offline.lines().next().unwrap().ends_with(",uwe"));
        assert_eq!(offline.lines().count(), 25);
        let online = std::fs::read_to_string(dir.path().join("online_table.csv")).unwrap();
        assert_eq!(online.lines().count(), 25);
        assert!(rep.files.iter().any(|f| f.ends_with("scatter/uwe_vs_driving_score.csv")));
    }

    #[test]
    fn correlate_respects_fixed_weights_from_config() {
        let (dir, mut cfg) = study_dir();
        cfg.uwe = Some(crate::config::FixedUwe {
            gamma: 1.0,
            beta: [("steer_mae".to_string(), 1.0)].into_iter().collect(),
        });
        let stage = cmd_correlate(&cfg, dir.path(), false).unwrap();
        assert!(stage.notes.iter().any(|n| n.contains("fixed weights from config")));
        // With all weight on steer_mae at the catalogue gamma, the uwe column
        // equals uw_steer_mae, so their correlation rows agree.
        let text = std::fs::read_to_string(dir.path().join("correlations.csv")).unwrap();
        // Bootstrap streams are derived from metric names, so compare only
        // the name-independent columns: n, |r|, sign, pearson, spearman.
        let row = |m: &str| -> Vec<String> {
            text.lines()
                .find(|l| l.starts_with(&format!("{m},driving_score,")))
                .unwrap()
                .split(',')
                .map(str::to_string)
                .collect::<Vec<_>>()[2..7]
                .to_vec()
        };
        assert_eq!(row("uwe"), row("uw_steer_mae"));
    }

    #[test]
    fn missing_study_inputs_exit_with_the_usage_class() {
        let cfg = tiny_cfg();
        let err = cmd_fit_uwe(&cfg, Path::new("/nonexistent-study")).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{err}");
        let mut cfg2 = tiny_cfg();
        cfg2.paths.tracks = Some(PathBuf::from("/nonexistent-tracks.jsonl"));
        let dir = tempfile::tempdir().unwrap();
        let err = cmd_simulate(&cfg2, dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("nonexistent-tracks"), "{err}");
    }

    #[test]
    fn waypoint_metrics_on_control_data_fail_at_runtime_with_the_kernel_name() {
        let (dir, mut cfg) = study_dir();
        cfg.offline.metrics = Some(vec!["waypoint_mae".to_string()]);
        let err = cmd_score_offline(&cfg, &dir.path().join("gt.jsonl")).unwrap_err();
        assert_eq!(err.exit_code(), 3, "{err}");
        assert!(err.to_string().contains("waypoint_mae"), "{err}");
    }
}
