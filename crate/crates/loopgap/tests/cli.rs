//! Contract tests for the command-line surface: exit codes, error wording,
//! flag precedence, and output shapes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn loopgap(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loopgap"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn loopgap")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn simulate_study(dir: &Path) {
    let out = loopgap(
        &["simulate", "--out", dir.to_str().unwrap(), "--set", "study.samples=4"],
        dir.parent().unwrap(),
    );
    assert_eq!(out.status.code(), Some(0), "simulate failed: {}", stderr_of(&out));
}

#[test]
fn simulate_writes_the_full_study_manifest() {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("study");
    simulate_study(&dir);

    let manifest = fs::read_to_string(dir.join("manifest.json")).unwrap();
    let predictions = manifest.matches("predictions/").count();
    let episodes = manifest.matches("episodes/").count();
    assert_eq!(predictions, 24, "expected one prediction dataset per policy");
    assert_eq!(episodes, 24, "expected one episode file per policy");
    for pid in ["n0.02_m0_cal", "n0.2_m0.7_unc"] {
        let text = fs::read_to_string(dir.join("episodes").join(format!("{pid}.jsonl"))).unwrap();
        assert_eq!(text.lines().count(), 6, "expected one episode per track for {pid}");
    }
}

#[test]
fn missing_track_file_exits_2_and_names_the_path() {
    let root = tempfile::tempdir().unwrap();
    let out = loopgap(
        &["simulate", "--set", "paths.tracks=\"nonexistent-tracks.jsonl\""],
        root.path(),
    );
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).contains("nonexistent-tracks.jsonl"), "stderr: {}", stderr_of(&out));
}

#[test]
fn malformed_dataset_line_exits_2_with_line_number() {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("study");
    simulate_study(&dir);

    let gt = fs::read_to_string(dir.join("gt.jsonl")).unwrap();
    let mut lines: Vec<&str> = gt.lines().take(5).collect();
    lines[2] = "this is not json";
    let bad = root.path().join("bad.jsonl");
    fs::write(&bad, lines.join("\n")).unwrap();

    let out = loopgap(&["score-offline", bad.to_str().unwrap()], root.path());
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).contains(":3:"), "stderr: {}", stderr_of(&out));
}

#[test]
fn inapplicable_kernel_exits_3_and_names_the_kernel() {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("study");
    simulate_study(&dir);

    let out = loopgap(
        &[
            "score-offline",
            dir.join("gt.jsonl").to_str().unwrap(),
            "--set",
            "offline.metrics=[\"waypoint_mae\"]",
        ],
        root.path(),
    );
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).contains("waypoint_mae"), "stderr: {}", stderr_of(&out));
}

#[test]
fn zero_corruption_dataset_scores_zero_error() {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("study");
    simulate_study(&dir);

    let out = loopgap(&["score-offline", dir.join("gt.jsonl").to_str().unwrap()], root.path());
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let csv = stdout_of(&out);
    assert!(csv.starts_with("policy_id,metric,value\n"), "got: {csv}");
    for metric in ["steer_mae", "action_mse", "qce", "tre"] {
        assert!(csv.contains(&format!("expert,{metric},0\n")), "{metric} nonzero:\n{csv}");
    }
}

#[test]
fn clean_episodes_score_a_perfect_driving_score() {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("study");
    simulate_study(&dir);

    let episodes = dir.join("episodes").join("n0.02_m0_unc.jsonl");
    let out = loopgap(&["score-online", episodes.to_str().unwrap()], root.path());
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    assert!(
        stdout_of(&out).contains("n0.02_m0_unc,driving_score,1\n"),
        "got:\n{}",
        stdout_of(&out)
    );
}

#[test]
fn empty_episode_file_exits_2() {
    let root = tempfile::tempdir().unwrap();
    let empty = root.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let out = loopgap(&["score-online", empty.to_str().unwrap()], root.path());
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
}

#[test]
fn seed_flag_beats_set_override_beats_config_file() {
    let root = tempfile::tempdir().unwrap();
    fs::write(root.path().join("loopgap.toml"), "[study]\nseed = 7\nsamples = 2\n").unwrap();
    let dir = root.path().join("study");
    let out = loopgap(
        &[
            "--config",
            "loopgap.toml",
            "--seed",
            "11",
            "--set",
            "study.seed=9",
            "simulate",
            "--out",
            dir.to_str().unwrap(),
        ],
        root.path(),
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let manifest = fs::read_to_string(dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 11"), "manifest: {manifest}");
}

#[test]
fn unknown_config_key_exits_2_and_names_it() {
    let root = tempfile::tempdir().unwrap();
    fs::write(root.path().join("loopgap.toml"), "[study]\nseeed = 7\n").unwrap();
    let out = loopgap(&["--config", "loopgap.toml", "simulate"], root.path());
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).contains("seeed"), "stderr: {}", stderr_of(&out));
}

#[test]
fn missing_input_path_without_config_exits_2() {
    let root = tempfile::tempdir().unwrap();
    let out = loopgap(&["score-offline"], root.path());
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).contains("paths.dataset"), "stderr: {}", stderr_of(&out));
}

#[test]
fn fit_with_fewer_policies_than_metrics_exits_2_with_explanation() {
    let root = tempfile::tempdir().unwrap();
    let mut policies = String::new();
    for i in 0..3 {
        policies.push_str(&format!(
            "{{\"policy_id\":\"p{i}\",\"noise\":0.0{},\"miss_rate\":0,\"calibrated\":false,\"zone_noise_mult\":3,\"bias\":0,\"k\":4}}\n",
            i + 1
        ));
    }
    fs::write(root.path().join("three.jsonl"), policies).unwrap();

    let dir = root.path().join("tiny");
    let out = loopgap(
        &[
            "simulate",
            "--out",
            dir.to_str().unwrap(),
            "--set",
            "paths.policies=\"three.jsonl\"",
        ],
        root.path(),
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));

    let out = loopgap(&["fit-uwe", dir.to_str().unwrap()], root.path());
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
    let err = stderr_of(&out);
    assert!(err.contains("policies") && err.contains("metrics"), "stderr: {err}");
}

#[test]
fn fitted_weights_sum_to_one_exactly_and_survive_a_frozen_refit() {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("study");
    simulate_study(&dir);

    let out = loopgap(&["fit-uwe", dir.to_str().unwrap()], root.path());
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let full = fs::read_to_string(dir.join("uwe.toml")).unwrap();

    let mut gamma = None;
    let mut betas: Vec<(String, f64)> = Vec::new();
    for line in full.lines() {
        if let Some(v) = line.strip_prefix("gamma = ") {
            gamma = Some(v.parse::<f64>().unwrap());
        } else if let Some((name, v)) = line.split_once(" = ") {
            if name != "gamma" {
                betas.push((name.to_string(), v.parse::<f64>().unwrap()));
            }
        }
    }
    let gamma = gamma.expect("gamma line");
    assert!(!betas.is_empty());
    let sum: f64 = betas.iter().map(|(_, b)| b).sum();
    assert_eq!(sum, 1.0, "weights must sum to one exactly, got {sum}");

    // Refitting with the grid frozen to the chosen exponent reproduces the
    // weights bit for bit.
    let out = loopgap(
        &[
            "fit-uwe",
            dir.to_str().unwrap(),
            "--set",
            &format!("fit.gamma_grid=[{gamma}]"),
        ],
        root.path(),
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let frozen = fs::read_to_string(dir.join("uwe.toml")).unwrap();
    assert_eq!(frozen, full, "frozen-exponent refit changed the weights");
}

#[test]
fn correlate_emits_every_pair_and_resorts_for_another_primary() {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("study");
    simulate_study(&dir);

    let out = loopgap(&["report", dir.to_str().unwrap()], root.path());
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let csv = fs::read_to_string(dir.join("correlations.csv")).unwrap();
    // 13 catalogue metrics + the fitted blend, against 9 online metrics.
    assert_eq!(csv.lines().count(), 1 + 14 * 9, "unexpected row count:\n{csv}");

    let out = loopgap(
        &["correlate", dir.to_str().unwrap(), "--primary-online", "success_rate"],
        root.path(),
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let csv = fs::read_to_string(dir.join("correlations.csv")).unwrap();

    // The offline blocks must arrive strongest-first against the new primary.
    let mut order: Vec<String> = Vec::new();
    let mut strength: Vec<f64> = Vec::new();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if !order.iter().any(|n| n == cols[0]) {
            order.push(cols[0].to_string());
        }
        if cols[1] == "success_rate" {
            strength.push(cols[3].parse().unwrap());
        }
    }
    assert_eq!(order.len(), strength.len());
    let mut by_strength: Vec<(f64, &String)> =
        strength.iter().copied().zip(order.iter()).collect();
    by_strength.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    // The file's block order must match the recomputed strength ranking
    // (allowing exact ties to keep either order).
    for (rank, name) in order.iter().enumerate() {
        assert_eq!(
            strength[rank], by_strength[rank].0,
            "block {rank} ('{name}') out of order for success_rate"
        );
    }
    assert!(dir.join("scatter").join("uwe_vs_success_rate.csv").exists());
}

#[test]
fn svg_flag_adds_scatter_graphics() {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("study");
    simulate_study(&dir);
    let out = loopgap(&["report", dir.to_str().unwrap(), "--svg"], root.path());
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let svg = dir.join("scatter").join("uwe_vs_driving_score.svg");
    assert!(svg.exists());
    assert!(fs::read_to_string(svg).unwrap().starts_with("<svg"));
}

#[test]
fn help_lists_every_global_flag() {
    let root = tempfile::tempdir().unwrap();
    let out = loopgap(&["--help"], root.path());
    assert_eq!(out.status.code(), Some(0));
    let text = stdout_of(&out);
    for flag in ["--config", "--seed", "--out", "--jobs", "--svg", "--set"] {
        assert!(text.contains(flag), "--help missing {flag}:\n{text}");
    }
    for sub in ["simulate", "score-offline", "score-online", "fit-uwe", "correlate", "report"] {
        assert!(text.contains(sub), "--help missing {sub}:\n{text}");
    }
}
