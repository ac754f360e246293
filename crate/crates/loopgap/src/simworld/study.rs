//! Study generation: write every artifact of an offline-vs-online evaluation
//! study into one directory, deterministically, with a hash manifest.
//!
//! Layout:
//!   tracks.jsonl                 the routes
//!   policies.jsonl               the policy family
//!   gt.jsonl                     expert ground-truth dataset
//!   predictions/<policy>.jsonl   offline replay dataset per policy
//!   episodes/<policy>.jsonl      closed-loop episode logs per policy
//!   manifest.json                sha256 of every artifact, written last

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::datamodel::{read_dataset, DataError, Dataset};
use crate::online::{episodes_canonical_string, read_episodes, EpisodeLog};
use crate::simworld::bundle::{bundled_family, bundled_tracks};
use crate::simworld::dataset::{evaluate_policy_offline, generate_gt_dataset};
use crate::simworld::planner::{EgoState, PlannerParams};
use crate::simworld::policy::{
    policies_canonical_string, read_policies, CorruptedPolicy, PolicySpec,
};
use crate::simworld::rollout::{episode_log, rollout, SimParams};
use crate::simworld::track::{read_tracks, tracks_canonical_string, Track};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{0}")]
    Invalid(String),
}

/// Knobs for study generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyOptions {
    /// Master seed; every policy/track stream is derived from it.
    pub seed: u64,
    /// Action samples per record for the bundled family.
    pub k: usize,
    pub planner: PlannerParams,
    pub sim: SimParams,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            seed: 42,
            k: 8,
            planner: PlannerParams::default(),
            sim: SimParams::default(),
        }
    }
}

/// One artifact entry of the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyManifest {
    pub seed: u64,
    pub k: usize,
    pub artifacts: Vec<ManifestEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

fn write_artifact(dir: &Path, rel: &str, text: &str) -> Result<ManifestEntry, StudyError> {
    let path = dir.join(rel);
    fs::write(&path, text).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(ManifestEntry { path: rel.to_string(), sha256: sha256_hex(text.as_bytes()) })
}

fn manifest_string(m: &StudyManifest) -> String {
    let mut out = String::new();
    let _ = write!(out, "{{\n  \"seed\": {},\n  \"k\": {},\n  \"artifacts\": [\n", m.seed, m.k);
    for (i, e) in m.artifacts.iter().enumerate() {
        let comma = if i + 1 < m.artifacts.len() { "," } else { "" };
        let _ = writeln!(out, "    {{\"path\": {}, \"sha256\": \"{}\"}}{comma}",
            serde_json::to_string(&e.path).expect("string encodes"), e.sha256);
    }
    out.push_str("  ]\n}\n");
    out
}

/// Roll one policy over every track, producing its episode logs.
pub fn run_policy_episodes(
    spec: &PolicySpec,
    tracks: &[Track],
    planner: &PlannerParams,
    sim: &SimParams,
    seed: u64,
) -> Vec<EpisodeLog> {
    tracks
        .iter()
        .map(|track| {
            let mut policy = CorruptedPolicy::new(spec, track, *planner, seed);
            let centerline = track.centerline.clone();
            let mut ctrl = move |ego: &EgoState, views: &[crate::datamodel::HazardView]| {
                policy.act(&centerline, ego, views).executed
            };
            let out = rollout(track, &mut ctrl, sim, false);
            episode_log(
                &format!("{}:{}", spec.policy_id, track.track_id),
                &spec.policy_id,
                track,
                &out,
            )
        })
        .collect()
}

/// Generate a full study for the given tracks and policy family.
pub fn run_study_with(
    dir: &Path,
    opts: &StudyOptions,
    tracks: &[Track],
    specs: &[PolicySpec],
) -> Result<StudyManifest, StudyError> {
    if tracks.is_empty() || specs.is_empty() {
        return Err(StudyError::Invalid("study needs at least one track and one policy".into()));
    }
    for t in tracks {
        t.validate().map_err(StudyError::Invalid)?;
    }
    for s in specs {
        s.validate().map_err(StudyError::Invalid)?;
    }
    fs::create_dir_all(dir.join("predictions")).map_err(|source| DataError::Io {
        path: dir.join("predictions").display().to_string(),
        source,
    })?;
    fs::create_dir_all(dir.join("episodes")).map_err(|source| DataError::Io {
        path: dir.join("episodes").display().to_string(),
        source,
    })?;

    let mut artifacts = Vec::new();
    artifacts.push(write_artifact(dir, "tracks.jsonl", &tracks_canonical_string(tracks))?);
    artifacts.push(write_artifact(dir, "policies.jsonl", &policies_canonical_string(specs))?);

    let gt = generate_gt_dataset(tracks, &opts.planner, &opts.sim);
    artifacts.push(write_artifact(dir, "gt.jsonl", &gt.canonical_string())?);

    // Policies are independent given (seed, policy, track) derived rng
    // streams, so they parallelize without affecting any output byte.
    let per_policy: Vec<(ManifestEntry, ManifestEntry)> = specs
        .par_iter()
        .map(|spec| -> Result<(ManifestEntry, ManifestEntry), StudyError> {
            let replay = evaluate_policy_offline(&gt, spec, tracks, &opts.planner, opts.seed)
                .map_err(StudyError::Invalid)?;
            let pred = write_artifact(
                dir,
                &format!("predictions/{}.jsonl", spec.policy_id),
                &replay.canonical_string(),
            )?;
            let logs = run_policy_episodes(spec, tracks, &opts.planner, &opts.sim, opts.seed);
            let epi = write_artifact(
                dir,
                &format!("episodes/{}.jsonl", spec.policy_id),
                &episodes_canonical_string(&logs),
            )?;
            Ok((pred, epi))
        })
        .collect::<Result<_, _>>()?;
    for (pred, epi) in per_policy {
        artifacts.push(pred);
        artifacts.push(epi);
    }

    artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = StudyManifest { seed: opts.seed, k: opts.k, artifacts };
    let path = dir.join("manifest.json");
    fs::write(&path, manifest_string(&manifest)).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(manifest)
}

/// Generate the bundled study: six routes, the 24-policy corruption grid.
pub fn run_study(dir: &Path, opts: &StudyOptions) -> Result<StudyManifest, StudyError> {
    run_study_with(dir, opts, &bundled_tracks(), &bundled_family(opts.k))
}

/// A study read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub tracks: Vec<Track>,
    pub specs: Vec<PolicySpec>,
    pub gt: Dataset,
    /// (policy_id, offline replay dataset), in policies-file order.
    pub predictions: Vec<(String, Dataset)>,
    /// (policy_id, episode logs), in policies-file order.
    pub episodes: Vec<(String, Vec<EpisodeLog>)>,
}

pub fn load_study(dir: &Path) -> Result<Study, DataError> {
    let tracks = read_tracks(&dir.join("tracks.jsonl"))?;
    let specs = read_policies(&dir.join("policies.jsonl"))?;
    let (gt, _) = read_dataset(&dir.join("gt.jsonl"))?;
    let mut predictions = Vec::with_capacity(specs.len());
    let mut episodes = Vec::with_capacity(specs.len());
    for spec in &specs {
        let (ds, _) = read_dataset(&dir.join(format!("predictions/{}.jsonl", spec.policy_id)))?;
        predictions.push((spec.policy_id.clone(), ds));
        let logs = read_episodes(&dir.join(format!("episodes/{}.jsonl", spec.policy_id)))?;
        episodes.push((spec.policy_id.clone(), logs));
    }
    Ok(Study { tracks, specs, gt, predictions, episodes })
}

/// Parse manifest.json from a study directory.
pub fn read_manifest(dir: &Path) -> Result<StudyManifest, DataError> {
    let path = dir.join("manifest.json");
    let label = path.display().to_string();
    let text = fs::read_to_string(&path)
        .map_err(|source| DataError::Io { path: label.clone(), source })?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| DataError::File { path: label.clone(), msg: format!("invalid JSON: {e}") })?;
    let obj = value
        .as_object()
        .ok_or_else(|| DataError::File { path: label.clone(), msg: "expected object".into() })?;
    let field_err = |msg: &str| DataError::File { path: label.clone(), msg: msg.to_string() };
    let seed = obj
        .get("seed")
        .and_then(Value::as_u64)
        .ok_or_else(|| field_err("seed: expected unsigned integer"))?;
    let k = obj
        .get("k")
        .and_then(Value::as_u64)
        .ok_or_else(|| field_err("k: expected unsigned integer"))? as usize;
    let mut artifacts = Vec::new();
    for (i, e) in obj
        .get("artifacts")
        .and_then(Value::as_array)
        .ok_or_else(|| field_err("artifacts: expected array"))?
        .iter()
        .enumerate()
    {
        let path = e
            .get("path")
            .and_then(Value::as_str)
            .ok_or_else(|| field_err(&format!("artifacts[{i}].path: expected string")))?;
        let sha = e
            .get("sha256")
            .and_then(Value::as_str)
            .ok_or_else(|| field_err(&format!("artifacts[{i}].sha256: expected string")))?;
        artifacts.push(ManifestEntry { path: path.to_string(), sha256: sha.to_string() });
    }
    Ok(StudyManifest { seed, k, artifacts })
}

/// Re-hash every artifact listed in a study's manifest and compare.
pub fn check_manifest(dir: &Path) -> Result<(), String> {
    let manifest = read_manifest(dir).map_err(|e| e.to_string())?;
    for e in &manifest.artifacts {
        let path = dir.join(&e.path);
        let bytes = fs::read(&path).map_err(|err| format!("{}: {err}", path.display()))?;
        let got = sha256_hex(&bytes);
        if got != e.sha256 {
            return Err(format!("{}: hash mismatch (manifest {}, file {got})", e.path, e.sha256));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simworld::geometry::{Polyline, Vec2};
    use crate::simworld::track::Hazard;

    fn small_tracks() -> Vec<Track> {
        vec![
            Track {
                track_id: "a".to_string(),
                centerline: Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(300.0, 0.0)])
                    .unwrap(),
                lane_half_width: 2.0,
                speed_limit: 10.0,
                hazards: vec![
                    Hazard::StopLine { arc: 120.0, period: 24.0, red_fraction: 0.4, offset: 6.0 },
                    Hazard::CrossingAgent {
                        arc: 220.0,
                        trigger_distance: 25.0,
                        crossing_speed: 1.5,
                    },
                ],
            },
            Track {
                track_id: "b".to_string(),
                centerline: Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(350.0, 0.0)])
                    .unwrap(),
                lane_half_width: 2.0,
                speed_limit: 10.0,
                hazards: vec![Hazard::StaticObstacle { arc: 180.0, lat_offset: 0.9, radius: 0.6 }],
            },
        ]
    }

    fn small_specs() -> Vec<PolicySpec> {
        vec![
            PolicySpec {
                policy_id: "good".into(),
                noise: 0.02,
                miss_rate: 0.0,
                calibrated: true,
                zone_noise_mult: 3.0,
                bias: 0.0,
                k: 4,
            },
            PolicySpec {
                policy_id: "bad".into(),
                noise: 0.1,
                miss_rate: 1.0,
                calibrated: false,
                zone_noise_mult: 3.0,
                bias: 0.0,
                k: 4,
            },
        ]
    }

    #[test]
    fn study_writes_loads_and_verifies() {
        let dir = tempfile::tempdir().unwrap();
        let opts = StudyOptions { k: 4, ..StudyOptions::default() };
        let manifest = run_study_with(dir.path(), &opts, &small_tracks(), &small_specs()).unwrap();
        // 2 fixed + 1 gt + 2 per policy.
        assert_eq!(manifest.artifacts.len(), 3 + 2 * 2);
        assert!(manifest.artifacts.windows(2).all(|w| w[0].path < w[1].path));

        check_manifest(dir.path()).unwrap();
        assert_eq!(read_manifest(dir.path()).unwrap(), manifest);

        let study = load_study(dir.path()).unwrap();
        assert_eq!(study.tracks, small_tracks());
        assert_eq!(study.specs, small_specs());
        assert_eq!(study.predictions.len(), 2);
        assert_eq!(study.gt.records.len(), study.predictions[0].1.records.len());
        assert_eq!(study.episodes[0].1.len(), 2);

        // The blind policy must do strictly worse online than the clean one.
        let good: Vec<_> = study.episodes[0].1.iter().map(|l| l.terminal).collect();
        let bad: Vec<_> = study.episodes[1].1.iter().map(|l| l.terminal).collect();
        assert!(good.iter().all(|t| *t == crate::online::Terminal::Finished), "{good:?}");
        assert!(bad.contains(&crate::online::Terminal::Collision), "{bad:?}");
    }

    #[test]
    fn studies_are_reproducible_byte_for_byte() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let opts = StudyOptions { k: 4, ..StudyOptions::default() };
        let m1 = run_study_with(d1.path(), &opts, &small_tracks(), &small_specs()).unwrap();
        let m2 = run_study_with(d2.path(), &opts, &small_tracks(), &small_specs()).unwrap();
        assert_eq!(m1, m2);
        for e in &m1.artifacts {
            let a = std::fs::read(d1.path().join(&e.path)).unwrap();
            let b = std::fs::read(d2.path().join(&e.path)).unwrap();
            assert_eq!(a, b, "{} differs between runs", e.path);
        }
    }

    #[test]
    fn different_seeds_change_the_corruption() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let mut opts = StudyOptions { k: 4, ..StudyOptions::default() };
        let specs = vec![PolicySpec {
            policy_id: "noisy".into(),
            noise: 0.1,
            miss_rate: 0.5,
            calibrated: true,
            zone_noise_mult: 3.0,
            bias: 0.0,
            k: 4,
        }];
        let m1 = run_study_with(d1.path(), &opts, &small_tracks(), &specs).unwrap();
        opts.seed = 43;
        let m2 = run_study_with(d2.path(), &opts, &small_tracks(), &specs).unwrap();
        let h1: Vec<_> = m1.artifacts.iter().map(|e| &e.sha256).collect();
        let h2: Vec<_> = m2.artifacts.iter().map(|e| &e.sha256).collect();
        assert_ne!(h1, h2);
        // Ground truth is seed-independent (the expert has no randomness).
        let gt1 = m1.artifacts.iter().find(|e| e.path == "gt.jsonl").unwrap();
        let gt2 = m2.artifacts.iter().find(|e| e.path == "gt.jsonl").unwrap();
        assert_eq!(gt1.sha256, gt2.sha256);
    }

    #[test]
    fn corrupted_manifest_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let opts = StudyOptions { k: 4, ..StudyOptions::default() };
        run_study_with(dir.path(), &opts, &small_tracks(), &small_specs()).unwrap();
        let gt_path = dir.path().join("gt.jsonl");
        let mut text = std::fs::read_to_string(&gt_path).unwrap();
        text.push('\n');
        std::fs::write(&gt_path, text).unwrap();
        let err = check_manifest(dir.path()).unwrap_err();
        assert!(err.contains("gt.jsonl"), "got: {err}");
    }
}
