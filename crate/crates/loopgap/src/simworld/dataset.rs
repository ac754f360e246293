//! Study datasets: recording expert ground truth from closed-loop rollouts,
//! and replaying corrupted policies on those recorded states.
//!
//! Replay evaluates a policy at the expert's states: each record carries the
//! true hazard views from the expert run, the policy masks its own misses and
//! corrupts its own actions, so its offline samples reflect exactly the
//! corruption that also drove its closed-loop episodes.

use crate::datamodel::{
    Action, Command, Dataset, DatasetHeader, HazardView, ObservationMeta, PredictionRecord,
    StateContext,
};
use crate::numeric::canon;
use crate::simworld::geometry::Vec2;
use crate::simworld::planner::{plan, EgoState, PlannerParams};
use crate::simworld::policy::{CorruptedPolicy, PolicySpec};
use crate::simworld::rollout::{rollout, SimParams, TraceStep};
use crate::simworld::track::Track;

/// Record every this-many control steps when building ground truth.
pub const RECORD_STRIDE: usize = 10;

/// Heading change ahead that labels a state as a turn, radians.
const TURN_THRESHOLD: f64 = 0.25;
/// Lookahead distance for the turn label, meters.
const TURN_LOOKAHEAD: f64 = 10.0;

fn wrap_angle(mut a: f64) -> f64 {
    while a > std::f64::consts::PI {
        a -= 2.0 * std::f64::consts::PI;
    }
    while a < -std::f64::consts::PI {
        a += 2.0 * std::f64::consts::PI;
    }
    a
}

/// Navigation label for step i: where the route bends over the next stretch.
fn command_label(trace: &[TraceStep], i: usize) -> Command {
    let arc0 = trace[i].ego.arc;
    let h0 = trace[i].ego.heading;
    for step in &trace[i..] {
        if step.ego.arc >= arc0 + TURN_LOOKAHEAD {
            let dh = wrap_angle(step.ego.heading - h0);
            return if dh > TURN_THRESHOLD {
                Command::Left
            } else if dh < -TURN_THRESHOLD {
                Command::Right
            } else {
                Command::Follow
            };
        }
    }
    Command::Follow
}

fn canon_action(a: Action) -> Action {
    Action::new(canon(a.steer), canon(a.throttle), canon(a.brake))
}

fn canon_view(v: &HazardView) -> HazardView {
    HazardView {
        index: v.index,
        dist_ahead: canon(v.dist_ahead),
        stop_at: v.stop_at.map(canon),
        speed_cap: v.speed_cap.map(canon),
        shift: canon(v.shift),
    }
}

/// Roll the expert over every track and record each stride-th state as a
/// ground-truth record (K = 1, the expert action is both sample and truth).
/// Every float is put on the canonical grid at creation.
pub fn generate_gt_dataset(tracks: &[Track], planner: &PlannerParams, sim: &SimParams) -> Dataset {
    let mut records = Vec::new();
    for track in tracks {
        let centerline = track.centerline.clone();
        let pp = *planner;
        let mut ctrl =
            move |ego: &EgoState, views: &[HazardView]| plan(&centerline, ego, views, &pp);
        let outcome = rollout(track, &mut ctrl, sim, true);
        let trace = outcome.trace.expect("trace requested");
        for (i, step) in trace.iter().enumerate() {
            if i % RECORD_STRIDE != 0 {
                continue;
            }
            let gt = canon_action(step.action);
            let ctx = StateContext {
                track_id: track.track_id.clone(),
                time: canon(step.time),
                arc: canon(step.ego.arc),
                x: canon(step.ego.pos.x),
                y: canon(step.ego.pos.y),
                heading: canon(step.ego.heading),
                hazards: step.views.iter().map(canon_view).collect(),
            };
            let meta = ObservationMeta {
                speed: canon(step.ego.v),
                command: command_label(&trace, i),
            };
            records.push(PredictionRecord::new(
                format!("{}:{:05}", track.track_id, step.step),
                gt,
                None,
                meta,
                vec![gt],
                None,
                Some(ctx),
            ));
        }
    }
    Dataset {
        header: DatasetHeader::new(1, None, Some("expert".to_string())),
        records,
    }
}

/// Replay one policy over the ground-truth states: same records, but the K
/// action samples come from the policy. Records must carry context and be
/// grouped by track in recording order (as `generate_gt_dataset` emits them).
pub fn evaluate_policy_offline(
    gt: &Dataset,
    spec: &PolicySpec,
    tracks: &[Track],
    planner: &PlannerParams,
    seed: u64,
) -> Result<Dataset, String> {
    let mut records = Vec::with_capacity(gt.records.len());
    let mut current: Option<(usize, CorruptedPolicy)> = None;
    for rec in &gt.records {
        let ctx = rec
            .context
            .as_ref()
            .ok_or_else(|| format!("record '{}' has no context; replay needs study ground truth", rec.record_id))?;
        let track_index = match &current {
            Some((ti, _)) if tracks[*ti].track_id == ctx.track_id => *ti,
            _ => {
                let ti = tracks
                    .iter()
                    .position(|t| t.track_id == ctx.track_id)
                    .ok_or_else(|| format!("record '{}' references unknown track '{}'", rec.record_id, ctx.track_id))?;
                current = Some((ti, CorruptedPolicy::new(spec, &tracks[ti], *planner, seed)));
                ti
            }
        };
        let track = &tracks[track_index];
        let policy = &mut current.as_mut().expect("just set").1;
        let ego = EgoState {
            pos: Vec2::new(ctx.x, ctx.y),
            heading: ctx.heading,
            v: rec.meta.speed,
            arc: ctx.arc,
        };
        let out = policy.act(&track.centerline, &ego, &ctx.hazards);
        let samples: Vec<Action> = out.samples.into_iter().map(canon_action).collect();
        records.push(PredictionRecord::new(
            rec.record_id.clone(),
            rec.gt_action,
            None,
            rec.meta,
            samples,
            None,
            Some(ctx.clone()),
        ));
    }
    Ok(Dataset {
        header: DatasetHeader::new(spec.k, None, Some(spec.policy_id.clone())),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::read_dataset_str;
    use crate::offline::{kernel_by_name, KernelParams};
    use crate::simworld::geometry::Polyline;
    use crate::simworld::track::Hazard;

    fn test_tracks() -> Vec<Track> {
        vec![
            Track {
                track_id: "a".to_string(),
                centerline: Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(300.0, 0.0)]).unwrap(),
                lane_half_width: 2.0,
                speed_limit: 10.0,
                hazards: vec![Hazard::StopLine {
                    arc: 150.0,
                    period: 60.0,
                    red_fraction: 0.5,
                    offset: 0.0,
                }],
            },
            Track {
                track_id: "b".to_string(),
                centerline: Polyline::new(vec![
                    Vec2::new(0.0, 0.0),
                    Vec2::new(100.0, 0.0),
                    Vec2::new(180.0, 60.0),
                    Vec2::new(280.0, 60.0),
                ])
                .unwrap(),
                lane_half_width: 2.0,
                speed_limit: 10.0,
                hazards: vec![Hazard::StaticObstacle { arc: 220.0, lat_offset: 0.9, radius: 0.6 }],
            },
        ]
    }

    fn gt() -> (Vec<Track>, Dataset) {
        let tracks = test_tracks();
        let ds = generate_gt_dataset(&tracks, &PlannerParams::default(), &SimParams::default());
        (tracks, ds)
    }

    #[test]
    fn ground_truth_has_expected_shape() {
        let (tracks, ds) = gt();
        assert!(ds.validate().is_ok(), "{:?}", ds.validate());
        assert_eq!(ds.header.k, 1);
        assert_eq!(ds.header.policy_id.as_deref(), Some("expert"));
        assert!(ds.records.len() > 100, "records: {}", ds.records.len());
        for rec in &ds.records {
            assert_eq!(rec.samples_action, vec![rec.gt_action]);
            let ctx = rec.context.as_ref().unwrap();
            assert!(tracks.iter().any(|t| t.track_id == ctx.track_id));
        }
        // Ids carry the source step; times advance by the record stride.
        let first = &ds.records[0];
        assert_eq!(first.record_id, "a:00000");
        assert_eq!(first.context.as_ref().unwrap().time, 0.0);
        let second = &ds.records[1];
        assert_eq!(second.record_id, "a:00010");
        assert!((second.context.as_ref().unwrap().time - 0.5).abs() < 1e-9);
    }

    #[test]
    fn ground_truth_round_trips_byte_identical() {
        let (_, ds) = gt();
        let text = ds.canonical_string();
        let (parsed, warnings) = read_dataset_str(&text, "mem").unwrap();
        assert!(warnings.is_empty(), "{warnings:?}");
        assert_eq!(parsed, ds);
        assert_eq!(parsed.canonical_string(), text);
    }

    #[test]
    fn uncorrupted_replay_scores_zero_on_every_kernel() {
        // A policy with no noise, no misses, and no bias reproduces the
        // expert at each recorded state up to the canonical float grid.
        let (tracks, ds) = gt();
        let spec = PolicySpec {
            policy_id: "clone".to_string(),
            ..PolicySpec::expert()
        };
        let replay =
            evaluate_policy_offline(&ds, &spec, &tracks, &PlannerParams::default(), 7).unwrap();
        assert_eq!(replay.header.policy_id.as_deref(), Some("clone"));
        let params = KernelParams::default();
        // tre is excluded: its relative threshold has zero width where the
        // truth is exactly zero, so grid-level dust already counts as an
        // exceedance there.
        for name in ["steer_mae", "steer_mse", "action_mae", "throttle_mae", "qce"] {
            let kernel = kernel_by_name(name, &params).unwrap();
            let mut worst = 0.0_f64;
            for rec in &replay.records {
                worst = worst.max(kernel.eval(rec).unwrap().abs());
            }
            assert!(worst < 1e-6, "{name}: worst per-record loss {worst}");
        }
    }

    #[test]
    fn replay_respects_the_miss_mask() {
        let (tracks, ds) = gt();
        // Find a braking-for-red state: a stop demand close enough that the
        // required deceleration is past the planner's braking threshold.
        let rec = ds
            .records
            .iter()
            .find(|r| {
                let v = r.meta.speed;
                v > 4.0
                    && r.context.as_ref().unwrap().hazards.iter().any(|h| match h.stop_at {
                        // The planner's own braking rule: demand >= 2 m/s^2.
                        Some(d) => v * v / (2.0 * (d - 2.0).max(0.1)) >= 2.0,
                        None => false,
                    })
            })
            .expect("expert run includes a braking approach");
        let pick = |miss: f64, id: &str| {
            let spec = PolicySpec {
                policy_id: id.to_string(),
                miss_rate: miss,
                ..PolicySpec::expert()
            };
            let replay =
                evaluate_policy_offline(&ds, &spec, &tracks, &PlannerParams::default(), 7).unwrap();
            replay
                .records
                .iter()
                .find(|r| r.record_id == rec.record_id)
                .unwrap()
                .executed_action
        };
        let seeing = pick(0.0, "sees");
        let blind = pick(1.0, "blind");
        assert!(seeing.brake > 0.0, "seeing policy must brake: {seeing:?}");
        assert_eq!(blind.brake, 0.0, "blind policy must not brake: {blind:?}");
    }

    #[test]
    fn replay_requires_context() {
        let (tracks, mut ds) = gt();
        ds.records[0].context = None;
        let spec = PolicySpec::expert();
        let err = evaluate_policy_offline(&ds, &spec, &tracks, &PlannerParams::default(), 7)
            .unwrap_err();
        assert!(err.contains("no context"), "got: {err}");
    }

    #[test]
    fn turn_labels_mark_the_curves() {
        // Track "b" kinks ~37 deg left at arc 100 and back right at arc 200.
        let (_, ds) = gt();
        let labels: Vec<Command> = ds
            .records
            .iter()
            .filter(|r| r.record_id.starts_with("b:"))
            .map(|r| r.meta.command)
            .collect();
        assert!(labels.contains(&Command::Left), "no left labels found");
        assert!(labels.contains(&Command::Right), "no right labels found");
        assert!(labels.contains(&Command::Follow));
    }
}
