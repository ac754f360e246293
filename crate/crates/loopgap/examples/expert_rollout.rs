//! Drive the scripted planner around every bundled track and print each
//! episode's outcome. The planner is the same controller that produces the
//! ground-truth datasets, so every run here should finish cleanly.
//!
//! Run with: cargo run --example expert_rollout

use loopgap::simworld::bundle::bundled_tracks;
use loopgap::simworld::planner::{plan, PlannerParams};
use loopgap::simworld::rollout::{rollout, SimParams};

fn main() {
    let planner = PlannerParams::default();
    let sim = SimParams::default();

    println!("{:<12} {:>9} {:>11} {:>9} {:>7}", "track", "terminal", "completed", "route", "events");
    for track in bundled_tracks() {
        let centerline = track.centerline.clone();
        let mut controller = |ego: &_, views: &[_]| plan(&centerline, ego, views, &planner);
        let outcome = rollout(&track, &mut controller, &sim, false);
        println!(
            "{:<12} {:>9} {:>10.1}m {:>8.1}m {:>7}",
            track.track_id,
            outcome.terminal.name(),
            outcome.completed_length,
            track.route_length(),
            outcome.events.len(),
        );
        for ev in &outcome.events {
            println!("    infraction: {} at t={:.1}s", ev.kind.name(), ev.time);
        }
    }
}
