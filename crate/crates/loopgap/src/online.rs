//! Online (closed-loop) episode scoring: infraction penalties, route
//! completion, the aggregate driving score, and per-distance infraction rates.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use crate::datamodel::{get_array, get_f64, get_str, kind_name, DataError};
use crate::numeric::{sig9, tree_mean, tree_sum};

// ── Episode logs ─────────────────────────────────────────────────────────────

/// Scored infraction categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InfractionKind {
    CollisionPedestrian,
    CollisionVehicle,
    CollisionStatic,
    RedLight,
    StopSign,
    OutsideRouteLane,
}

impl InfractionKind {
    pub const ALL: [InfractionKind; 6] = [
        InfractionKind::CollisionPedestrian,
        InfractionKind::CollisionVehicle,
        InfractionKind::CollisionStatic,
        InfractionKind::RedLight,
        InfractionKind::StopSign,
        InfractionKind::OutsideRouteLane,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            InfractionKind::CollisionPedestrian => "collision_pedestrian",
            InfractionKind::CollisionVehicle => "collision_vehicle",
            InfractionKind::CollisionStatic => "collision_static",
            InfractionKind::RedLight => "red_light",
            InfractionKind::StopSign => "stop_sign",
            InfractionKind::OutsideRouteLane => "outside_route_lane",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.name() == name)
    }

    pub fn is_collision(&self) -> bool {
        matches!(
            self,
            InfractionKind::CollisionPedestrian
                | InfractionKind::CollisionVehicle
                | InfractionKind::CollisionStatic
        )
    }
}

/// One scored event. `length` is the off-route arc length and is present
/// exactly for [`InfractionKind::OutsideRouteLane`] events.
#[derive(Debug, Clone, PartialEq)]
pub struct InfractionEvent {
    pub kind: InfractionKind,
    pub time: f64,
    pub length: Option<f64>,
}

/// Why an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminal {
    /// Reached the end of the route.
    Finished,
    /// Left the route corridor beyond recovery.
    Deviation,
    /// Ran out the episode clock.
    Timeout,
    /// Stood still too long.
    Blocked,
    /// Stopped by a collision.
    Collision,
}

impl Terminal {
    pub fn name(&self) -> &'static str {
        match self {
            Terminal::Finished => "finished",
            Terminal::Deviation => "deviation",
            Terminal::Timeout => "timeout",
            Terminal::Blocked => "blocked",
            Terminal::Collision => "collision",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "finished" => Terminal::Finished,
            "deviation" => Terminal::Deviation,
            "timeout" => Terminal::Timeout,
            "blocked" => Terminal::Blocked,
            "collision" => Terminal::Collision,
            _ => return None,
        })
    }
}

/// The scored outcome of one route attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode_id: String,
    pub policy_id: String,
    pub track_id: String,
    /// Route length in meters.
    pub route_length: f64,
    /// Monotone projected progress along the route, in meters.
    pub completed_length: f64,
    /// Episode wall time in seconds.
    pub duration: f64,
    pub terminal: Terminal,
    /// Events in chronological order.
    pub events: Vec<InfractionEvent>,
}

impl EpisodeLog {
    /// Structural checks; messages name the episode and field.
    pub fn validate(&self) -> Result<(), String> {
        let id = &self.episode_id;
        if !(self.route_length.is_finite() && self.route_length > 0.0) {
            return Err(format!("episode '{id}': route_length {} must be finite and > 0", self.route_length));
        }
        if !(self.completed_length.is_finite() && self.completed_length >= 0.0) {
            return Err(format!("episode '{id}': completed_length {} must be finite and >= 0", self.completed_length));
        }
        if self.completed_length > self.route_length * (1.0 + 1e-9) {
            return Err(format!(
                "episode '{id}': completed_length {} exceeds route_length {}",
                self.completed_length, self.route_length
            ));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(format!("episode '{id}': duration {} must be finite and >= 0", self.duration));
        }
        for (i, ev) in self.events.iter().enumerate() {
            if !(ev.time.is_finite() && ev.time >= 0.0 && ev.time <= self.duration + 1e-9) {
                return Err(format!(
                    "episode '{id}': events[{i}] time {} outside [0, duration {}]",
                    ev.time, self.duration
                ));
            }
            match (ev.kind, ev.length) {
                (InfractionKind::OutsideRouteLane, None) => {
                    return Err(format!("episode '{id}': events[{i}] outside_route_lane needs a length"));
                }
                (InfractionKind::OutsideRouteLane, Some(len)) => {
                    if !(len.is_finite() && len >= 0.0) {
                        return Err(format!("episode '{id}': events[{i}] length {len} must be finite and >= 0"));
                    }
                }
                (_, Some(_)) => {
                    return Err(format!(
                        "episode '{id}': events[{i}] {} must not carry a length",
                        ev.kind.name()
                    ));
                }
                (_, None) => {}
            }
        }
        Ok(())
    }

    /// Success means the route was finished end to end.
    pub fn is_success(&self) -> bool {
        self.terminal == Terminal::Finished
            && self.completed_length >= self.route_length * (1.0 - 1e-9)
    }
}

// ── Scoring ──────────────────────────────────────────────────────────────────

/// Multiplicative penalty factors per infraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyTable {
    pub collision_pedestrian: f64,
    pub collision_vehicle: f64,
    pub collision_static: f64,
    pub red_light: f64,
    pub stop_sign: f64,
}

impl Default for PenaltyTable {
    fn default() -> Self {
        PenaltyTable {
            collision_pedestrian: 0.50,
            collision_vehicle: 0.60,
            collision_static: 0.65,
            red_light: 0.70,
            stop_sign: 0.80,
        }
    }
}

impl PenaltyTable {
    pub fn factor(&self, kind: InfractionKind) -> Option<f64> {
        Some(match kind {
            InfractionKind::CollisionPedestrian => self.collision_pedestrian,
            InfractionKind::CollisionVehicle => self.collision_vehicle,
            InfractionKind::CollisionStatic => self.collision_static,
            InfractionKind::RedLight => self.red_light,
            InfractionKind::StopSign => self.stop_sign,
            InfractionKind::OutsideRouteLane => return None,
        })
    }

    pub fn validate(&self) -> Result<(), String> {
        for kind in InfractionKind::ALL {
            if let Some(f) = self.factor(kind) {
                if !(f.is_finite() && f > 0.0 && f <= 1.0) {
                    return Err(format!("penalty for {} is {f}, must be in (0, 1]", kind.name()));
                }
            }
        }
        Ok(())
    }
}

/// Product of penalty factors over all events. Off-route events scale by the
/// fraction of the route driven outside the lane instead of a fixed factor.
pub fn infraction_penalty(log: &EpisodeLog, table: &PenaltyTable) -> f64 {
    let mut p = 1.0;
    for ev in &log.events {
        match table.factor(ev.kind) {
            Some(f) => p *= f,
            None => {
                let len = ev.length.unwrap_or(0.0);
                p *= (1.0 - len / log.route_length).max(0.0);
            }
        }
    }
    p
}

/// Fraction of the route completed, in [0, 1].
pub fn route_completion(log: &EpisodeLog) -> f64 {
    (log.completed_length / log.route_length).clamp(0.0, 1.0)
}

/// Per-episode driving score: completion scaled by the infraction penalty.
pub fn episode_driving_score(log: &EpisodeLog, table: &PenaltyTable) -> f64 {
    route_completion(log) * infraction_penalty(log, table)
}

/// Mean driving score over a set of episodes.
pub fn driving_score(logs: &[EpisodeLog], table: &PenaltyTable) -> f64 {
    let scores: Vec<f64> = logs.iter().map(|l| episode_driving_score(l, table)).collect();
    tree_mean(&scores)
}

/// Canonical online metric names, in report order.
pub fn online_metric_names() -> [&'static str; 9] {
    [
        "driving_score",
        "success_rate",
        "route_completion",
        "infractions_per_km",
        "collisions_all_per_km",
        "collisions_vehicle_per_km",
        "collisions_environment_per_km",
        "red_light_per_km",
        "stop_sign_per_km",
    ]
}

/// Per-policy online metric values, in canonical order. Per-distance rates
/// are absent when no distance was completed.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineReport {
    pub policy_id: String,
    pub entries: Vec<(String, Option<f64>)>,
}

impl OnlineReport {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(n, _)| n == name).and_then(|(_, v)| *v)
    }
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("no episodes to score")]
    NoEpisodes,
    #[error("invalid episode: {0}")]
    InvalidEpisode(String),
    #[error("invalid penalty table: {0}")]
    InvalidPenalties(String),
}

/// Score one policy's episodes into the canonical online metrics.
pub fn score_set(
    policy_id: &str,
    logs: &[EpisodeLog],
    table: &PenaltyTable,
) -> Result<OnlineReport, ScoreError> {
    if logs.is_empty() {
        return Err(ScoreError::NoEpisodes);
    }
    table.validate().map_err(ScoreError::InvalidPenalties)?;
    for log in logs {
        log.validate().map_err(ScoreError::InvalidEpisode)?;
    }

    let ds = driving_score(logs, table);
    let successes: Vec<f64> = logs.iter().map(|l| if l.is_success() { 1.0 } else { 0.0 }).collect();
    let completions: Vec<f64> = logs.iter().map(route_completion).collect();
    let km: f64 = tree_sum(&logs.iter().map(|l| l.completed_length).collect::<Vec<_>>()) / 1000.0;

    let count = |pred: &dyn Fn(InfractionKind) -> bool| -> f64 {
        logs.iter()
            .flat_map(|l| l.events.iter())
            .filter(|ev| pred(ev.kind))
            .count() as f64
    };
    let rate = |n: f64| -> Option<f64> { if km > 0.0 { Some(n / km) } else { None } };

    let entries = vec![
        ("driving_score".to_string(), Some(ds)),
        ("success_rate".to_string(), Some(tree_mean(&successes))),
        ("route_completion".to_string(), Some(tree_mean(&completions))),
        ("infractions_per_km".to_string(), rate(count(&|_| true))),
        ("collisions_all_per_km".to_string(), rate(count(&|k| k.is_collision()))),
        (
            "collisions_vehicle_per_km".to_string(),
            rate(count(&|k| k == InfractionKind::CollisionVehicle)),
        ),
        (
            "collisions_environment_per_km".to_string(),
            rate(count(&|k| k == InfractionKind::CollisionStatic)),
        ),
        ("red_light_per_km".to_string(), rate(count(&|k| k == InfractionKind::RedLight))),
        ("stop_sign_per_km".to_string(), rate(count(&|k| k == InfractionKind::StopSign))),
    ];
    Ok(OnlineReport { policy_id: policy_id.to_string(), entries })
}

// ── Episode file io ──────────────────────────────────────────────────────────

/// Canonical text form: one episode per line, fixed key order, [`sig9`]
/// floats, trailing newline.
pub fn episodes_canonical_string(logs: &[EpisodeLog]) -> String {
    let mut out = String::new();
    for log in logs {
        let _ = write!(
            out,
            "{{\"episode_id\":{},\"policy_id\":{},\"track_id\":{},\"route_length\":{},\"completed_length\":{},\"duration\":{},\"terminal\":\"{}\",\"events\":[",
            serde_json::to_string(&log.episode_id).expect("string encodes"),
            serde_json::to_string(&log.policy_id).expect("string encodes"),
            serde_json::to_string(&log.track_id).expect("string encodes"),
            sig9(log.route_length),
            sig9(log.completed_length),
            sig9(log.duration),
            log.terminal.name(),
        );
        for (i, ev) in log.events.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{{\"kind\":\"{}\",\"time\":{}", ev.kind.name(), sig9(ev.time));
            if let Some(len) = ev.length {
                let _ = write!(out, ",\"length\":{}", sig9(len));
            }
            out.push('}');
        }
        out.push_str("]}\n");
    }
    out
}

/// Parse one policy's episode file (one JSON object per line).
pub fn read_episodes_str(text: &str, label: &str) -> Result<Vec<EpisodeLog>, DataError> {
    let mut logs = Vec::new();
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
        let log = parse_episode(&value).map_err(|msg| DataError::Line {
            path: label.to_string(),
            line: lineno,
            msg,
        })?;
        log.validate().map_err(|msg| DataError::Line { path: label.to_string(), line: lineno, msg })?;
        logs.push(log);
    }
    if logs.is_empty() {
        return Err(DataError::File { path: label.to_string(), msg: "no episodes".to_string() });
    }
    let mut seen = std::collections::BTreeSet::new();
    for log in &logs {
        if !seen.insert(log.episode_id.clone()) {
            return Err(DataError::File {
                path: label.to_string(),
                msg: format!("duplicate episode_id '{}'", log.episode_id),
            });
        }
    }
    Ok(logs)
}

fn parse_episode(value: &Value) -> Result<EpisodeLog, String> {
    let m = match value {
        Value::Object(m) => m,
        other => return Err(format!("expected object, got {}", kind_name(other))),
    };
    let terminal_name = get_str(m, "terminal")?;
    let terminal = Terminal::from_name(&terminal_name)
        .ok_or_else(|| format!("field terminal: unknown value '{terminal_name}'"))?;
    let mut events = Vec::new();
    for (i, ev) in get_array(m, "events")?.iter().enumerate() {
        let em = match ev {
            Value::Object(em) => em,
            other => return Err(format!("events[{i}]: expected object, got {}", kind_name(other))),
        };
        let kind_str = get_str(em, "kind").map_err(|e| format!("events[{i}]: {e}"))?;
        let kind = InfractionKind::from_name(&kind_str)
            .ok_or_else(|| format!("events[{i}]: unknown kind '{kind_str}'"))?;
        let length = match em.get("length") {
            None | Some(Value::Null) => None,
            Some(v) => {
                Some(v.as_f64().ok_or_else(|| format!("events[{i}].length: expected number"))?)
            }
        };
        events.push(InfractionEvent {
            kind,
            time: get_f64(em, "time").map_err(|e| format!("events[{i}]: {e}"))?,
            length,
        });
    }
    Ok(EpisodeLog {
        episode_id: get_str(m, "episode_id")?,
        policy_id: get_str(m, "policy_id")?,
        track_id: get_str(m, "track_id")?,
        route_length: get_f64(m, "route_length")?,
        completed_length: get_f64(m, "completed_length")?,
        duration: get_f64(m, "duration")?,
        terminal,
        events,
    })
}

/// Load an episode file. See [`read_episodes_str`].
pub fn read_episodes(path: &Path) -> Result<Vec<EpisodeLog>, DataError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
    read_episodes_str(&text, &path.display().to_string())
}

/// Write episodes in canonical form.
pub fn write_episodes(logs: &[EpisodeLog], path: &Path) -> Result<(), DataError> {
    std::fs::write(path, episodes_canonical_string(logs))
        .map_err(|source| DataError::Io { path: path.display().to_string(), source })
}
