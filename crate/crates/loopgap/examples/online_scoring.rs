//! Score hand-built episode logs with the multiplicative driving score and
//! the full online metric set. Each infraction multiplies a penalty factor
//! into the episode score, the result scales with route completion, and the
//! policy's driving score is the mean over its episodes.
//!
//! Run with: cargo run --example online_scoring

use std::error::Error;

use loopgap::online::{
    driving_score, score_set, EpisodeLog, InfractionEvent, InfractionKind, PenaltyTable, Terminal,
};

fn episode(id: &str, completed: f64, terminal: Terminal, events: Vec<InfractionEvent>) -> EpisodeLog {
    EpisodeLog {
        episode_id: id.to_string(),
        policy_id: "demo".to_string(),
        track_id: "loop_a".to_string(),
        route_length: 500.0,
        completed_length: completed,
        duration: 60.0,
        terminal,
        events,
    }
}

fn main() -> Result<(), Box<dyn Error>> {
    let table = PenaltyTable::default();

    // Clean full run: no penalties, full completion, score 1.0.
    let clean = episode("e1", 500.0, Terminal::Finished, vec![]);

    // One vehicle collision (factor 0.60) and 80% completion: 0.60 * 0.8 = 0.48.
    let crashed = episode(
        "e2",
        400.0,
        Terminal::Collision,
        vec![InfractionEvent { kind: InfractionKind::CollisionVehicle, time: 48.0, length: None }],
    );

    // Red light (0.70) then stop sign (0.80), full route: 0.70 * 0.80 = 0.56.
    let ran_signs = episode(
        "e3",
        500.0,
        Terminal::Finished,
        vec![
            InfractionEvent { kind: InfractionKind::RedLight, time: 20.0, length: None },
            InfractionEvent { kind: InfractionKind::StopSign, time: 40.0, length: None },
        ],
    );

    for log in [&clean, &crashed, &ran_signs] {
        let ds = driving_score(std::slice::from_ref(log), &table);
        println!("episode {}: {} events, driving score {:.2}", log.episode_id, log.events.len(), ds);
    }

    // Fleet view: the policy's score is the mean over episodes.
    let logs = vec![clean, crashed];
    println!();
    println!("mean of e1 and e2: {:.2}", driving_score(&logs, &table));

    let report = score_set("demo", &logs, &table)?;
    println!();
    println!("full online report for '{}':", report.policy_id);
    for (name, value) in &report.entries {
        match value {
            Some(v) => println!("  {:<32} {:.4}", name, v),
            None => println!("  {:<32} (undefined)", name),
        }
    }
    Ok(())
}
