//! Routes with scripted hazards, and their file format.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use crate::datamodel::{get_array, get_f64, get_str, kind_name, DataError};
use crate::numeric::sig9;
use crate::simworld::geometry::{Polyline, Vec2};

/// A scripted hazard anchored to the route's arc length.
#[derive(Debug, Clone, PartialEq)]
pub enum Hazard {
    /// A signalized stop line. Red phase: ((t + offset) mod period) is within
    /// the first red_fraction of the period.
    StopLine { arc: f64, period: f64, red_fraction: f64, offset: f64 },
    /// A pedestrian waiting beside the crossing point; starts walking across
    /// when the ego gets within trigger_distance of the crossing.
    CrossingAgent { arc: f64, trigger_distance: f64, crossing_speed: f64 },
    /// A parked obstruction intruding into the lane from one side.
    StaticObstacle { arc: f64, lat_offset: f64, radius: f64 },
    /// A slower vehicle ahead, driving the centerline from arc0 at t = 0 and
    /// leaving the route after active_length meters.
    LeadVehicle { arc0: f64, speed: f64, active_length: f64 },
}

impl Hazard {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Hazard::StopLine { .. } => "stop_line",
            Hazard::CrossingAgent { .. } => "crossing_agent",
            Hazard::StaticObstacle { .. } => "static_obstacle",
            Hazard::LeadVehicle { .. } => "lead_vehicle",
        }
    }

    /// Static anchor arc (spawn arc for the lead vehicle).
    pub fn anchor_arc(&self) -> f64 {
        match self {
            Hazard::StopLine { arc, .. } => *arc,
            Hazard::CrossingAgent { arc, .. } => *arc,
            Hazard::StaticObstacle { arc, .. } => *arc,
            Hazard::LeadVehicle { arc0, .. } => *arc0,
        }
    }
}

/// Signal phase for a stop line.
pub fn stop_line_red(period: f64, red_fraction: f64, offset: f64, t: f64) -> bool {
    (t + offset).rem_euclid(period) < red_fraction * period
}

/// A drivable route: centerline, lane geometry, and scripted hazards.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: String,
    pub centerline: Polyline,
    pub lane_half_width: f64,
    pub speed_limit: f64,
    pub hazards: Vec<Hazard>,
}

impl Track {
    pub fn route_length(&self) -> f64 {
        self.centerline.length()
    }

    pub fn validate(&self) -> Result<(), String> {
        let id = &self.track_id;
        if id.is_empty() {
            return Err("track_id is empty".to_string());
        }
        if !(self.lane_half_width.is_finite() && self.lane_half_width > 0.0) {
            return Err(format!("track '{id}': lane_half_width {} must be > 0", self.lane_half_width));
        }
        if !(self.speed_limit.is_finite() && self.speed_limit > 0.0) {
            return Err(format!("track '{id}': speed_limit {} must be > 0", self.speed_limit));
        }
        let len = self.route_length();
        for (i, h) in self.hazards.iter().enumerate() {
            let arc = h.anchor_arc();
            if !(arc.is_finite() && arc >= 0.0 && arc <= len) {
                return Err(format!(
                    "track '{id}': hazards[{i}] arc {arc} outside route [0, {}]",
                    sig9(len)
                ));
            }
            match h {
                Hazard::StopLine { period, red_fraction, offset, .. } => {
                    if !(period.is_finite() && *period > 0.0) {
                        return Err(format!("track '{id}': hazards[{i}] period {period} must be > 0"));
                    }
                    if !(red_fraction.is_finite() && (0.0..1.0).contains(red_fraction)) {
                        return Err(format!(
                            "track '{id}': hazards[{i}] red_fraction {red_fraction} outside [0, 1)"
                        ));
                    }
                    if !(offset.is_finite() && *offset >= 0.0) {
                        return Err(format!("track '{id}': hazards[{i}] offset {offset} must be >= 0"));
                    }
                }
                Hazard::CrossingAgent { trigger_distance, crossing_speed, .. } => {
                    if !(trigger_distance.is_finite() && *trigger_distance > 0.0) {
                        return Err(format!(
                            "track '{id}': hazards[{i}] trigger_distance {trigger_distance} must be > 0"
                        ));
                    }
                    if !(crossing_speed.is_finite() && *crossing_speed > 0.0) {
                        return Err(format!(
                            "track '{id}': hazards[{i}] crossing_speed {crossing_speed} must be > 0"
                        ));
                    }
                }
                Hazard::StaticObstacle { lat_offset, radius, .. } => {
                    if !lat_offset.is_finite() {
                        return Err(format!("track '{id}': hazards[{i}] lat_offset must be finite"));
                    }
                    if !(radius.is_finite() && *radius > 0.0) {
                        return Err(format!("track '{id}': hazards[{i}] radius {radius} must be > 0"));
                    }
                }
                Hazard::LeadVehicle { speed, active_length, .. } => {
                    if !(speed.is_finite() && *speed > 0.0) {
                        return Err(format!("track '{id}': hazards[{i}] speed {speed} must be > 0"));
                    }
                    if !(active_length.is_finite() && *active_length > 0.0) {
                        return Err(format!(
                            "track '{id}': hazards[{i}] active_length {active_length} must be > 0"
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

// ── File io ──────────────────────────────────────────────────────────────────

fn push_hazard(out: &mut String, h: &Hazard) {
    match h {
        Hazard::StopLine { arc, period, red_fraction, offset } => {
            let _ = write!(
                out,
                "{{\"kind\":\"stop_line\",\"arc\":{},\"period\":{},\"red_fraction\":{},\"offset\":{}}}",
                sig9(*arc),
                sig9(*period),
                sig9(*red_fraction),
                sig9(*offset)
            );
        }
        Hazard::CrossingAgent { arc, trigger_distance, crossing_speed } => {
            let _ = write!(
                out,
                "{{\"kind\":\"crossing_agent\",\"arc\":{},\"trigger_distance\":{},\"crossing_speed\":{}}}",
                sig9(*arc),
                sig9(*trigger_distance),
                sig9(*crossing_speed)
            );
        }
        Hazard::StaticObstacle { arc, lat_offset, radius } => {
            let _ = write!(
                out,
                "{{\"kind\":\"static_obstacle\",\"arc\":{},\"lat_offset\":{},\"radius\":{}}}",
                sig9(*arc),
                sig9(*lat_offset),
                sig9(*radius)
            );
        }
        Hazard::LeadVehicle { arc0, speed, active_length } => {
            let _ = write!(
                out,
                "{{\"kind\":\"lead_vehicle\",\"arc0\":{},\"speed\":{},\"active_length\":{}}}",
                sig9(*arc0),
                sig9(*speed),
                sig9(*active_length)
            );
        }
    }
}

/// Canonical text form: one track per line, fixed key order, sig9 floats.
pub fn tracks_canonical_string(tracks: &[Track]) -> String {
    let mut out = String::new();
    for t in tracks {
        let _ = write!(
            out,
            "{{\"track_id\":{},\"lane_half_width\":{},\"speed_limit\":{},\"centerline\":[",
            serde_json::to_string(&t.track_id).expect("string encodes"),
            sig9(t.lane_half_width),
            sig9(t.speed_limit)
        );
        for (i, p) in t.centerline.points().iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "[{},{}]", sig9(p.x), sig9(p.y));
        }
        out.push_str("],\"hazards\":[");
        for (i, h) in t.hazards.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            push_hazard(&mut out, h);
        }
        out.push_str("]}\n");
    }
    out
}

fn parse_hazard(v: &Value, i: usize) -> Result<Hazard, String> {
    let m = match v {
        Value::Object(m) => m,
        other => return Err(format!("hazards[{i}]: expected object, got {}", kind_name(other))),
    };
    let kind = get_str(m, "kind").map_err(|e| format!("hazards[{i}]: {e}"))?;
    let f = |key: &str| get_f64(m, key).map_err(|e| format!("hazards[{i}]: {e}"));
    Ok(match kind.as_str() {
        "stop_line" => Hazard::StopLine {
            arc: f("arc")?,
            period: f("period")?,
            red_fraction: f("red_fraction")?,
            offset: f("offset")?,
        },
        "crossing_agent" => Hazard::CrossingAgent {
            arc: f("arc")?,
            trigger_distance: f("trigger_distance")?,
            crossing_speed: f("crossing_speed")?,
        },
        "static_obstacle" => Hazard::StaticObstacle {
            arc: f("arc")?,
            lat_offset: f("lat_offset")?,
            radius: f("radius")?,
        },
        "lead_vehicle" => Hazard::LeadVehicle {
            arc0: f("arc0")?,
            speed: f("speed")?,
            active_length: f("active_length")?,
        },
        other => return Err(format!("hazards[{i}]: unknown kind '{other}'")),
    })
}

fn parse_track(value: &Value) -> Result<Track, String> {
    let m = match value {
        Value::Object(m) => m,
        other => return Err(format!("expected object, got {}", kind_name(other))),
    };
    let mut points = Vec::new();
    for (i, p) in get_array(m, "centerline")?.iter().enumerate() {
        let pair = match p {
            Value::Array(a) if a.len() == 2 => a,
            _ => return Err(format!("centerline[{i}]: expected [x, y] pair")),
        };
        let x = pair[0].as_f64().ok_or_else(|| format!("centerline[{i}]: expected numbers"))?;
        let y = pair[1].as_f64().ok_or_else(|| format!("centerline[{i}]: expected numbers"))?;
        points.push(Vec2::new(x, y));
    }
    let centerline = Polyline::new(points)?;
    let mut hazards = Vec::new();
    for (i, h) in get_array(m, "hazards")?.iter().enumerate() {
        hazards.push(parse_hazard(h, i)?);
    }
    let track = Track {
        track_id: get_str(m, "track_id")?,
        centerline,
        lane_half_width: get_f64(m, "lane_half_width")?,
        speed_limit: get_f64(m, "speed_limit")?,
        hazards,
    };
    track.validate()?;
    Ok(track)
}

/// Parse a tracks file (one JSON object per line).
pub fn read_tracks_str(text: &str, label: &str) -> Result<Vec<Track>, DataError> {
    let mut tracks: Vec<Track> = Vec::new();
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
        let track = parse_track(&value).map_err(|msg| DataError::Line {
            path: label.to_string(),
            line: lineno,
            msg,
        })?;
        if tracks.iter().any(|t| t.track_id == track.track_id) {
            return Err(DataError::Line {
                path: label.to_string(),
                line: lineno,
                msg: format!("duplicate track_id '{}'", track.track_id),
            });
        }
        tracks.push(track);
    }
    if tracks.is_empty() {
        return Err(DataError::File { path: label.to_string(), msg: "no tracks".to_string() });
    }
    Ok(tracks)
}

pub fn read_tracks(path: &Path) -> Result<Vec<Track>, DataError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
    read_tracks_str(&text, &path.display().to_string())
}

pub fn write_tracks(tracks: &[Track], path: &Path) -> Result<(), DataError> {
    std::fs::write(path, tracks_canonical_string(tracks))
        .map_err(|source| DataError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_track() -> Track {
        let centerline = Polyline::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(100.0, 0.0),
            Vec2::new(200.0, 50.0),
            Vec2::new(300.0, 50.0),
        ])
        .unwrap();
        Track {
            track_id: "t0".to_string(),
            centerline,
            lane_half_width: 2.0,
            speed_limit: 10.0,
            hazards: vec![
                Hazard::StopLine { arc: 80.0, period: 24.0, red_fraction: 0.4, offset: 6.0 },
                Hazard::CrossingAgent { arc: 150.0, trigger_distance: 25.0, crossing_speed: 1.5 },
                Hazard::StaticObstacle { arc: 220.0, lat_offset: 0.9, radius: 0.6 },
                Hazard::LeadVehicle { arc0: 60.0, speed: 4.0, active_length: 180.0 },
            ],
        }
    }

    #[test]
    fn red_phase_follows_the_cycle() {
        // period 10, red 40%, offset 0: red on [0, 4), green on [4, 10).
        assert!(stop_line_red(10.0, 0.4, 0.0, 0.0));
        assert!(stop_line_red(10.0, 0.4, 0.0, 3.9));
        assert!(!stop_line_red(10.0, 0.4, 0.0, 4.0));
        assert!(!stop_line_red(10.0, 0.4, 0.0, 9.9));
        assert!(stop_line_red(10.0, 0.4, 0.0, 10.0));
        // Offset shifts the phase.
        assert!(!stop_line_red(10.0, 0.4, 4.0, 0.0));
    }

    #[test]
    fn tracks_round_trip_byte_identical() {
        let tracks = vec![sample_track()];
        let text = tracks_canonical_string(&tracks);
        let parsed = read_tracks_str(&text, "mem").unwrap();
        assert_eq!(parsed, tracks);
        assert_eq!(tracks_canonical_string(&parsed), text);
    }

    #[test]
    fn track_validation_catches_bad_hazards() {
        let mut t = sample_track();
        t.hazards.push(Hazard::StopLine { arc: 9999.0, period: 24.0, red_fraction: 0.4, offset: 0.0 });
        assert!(t.validate().unwrap_err().contains("outside route"));

        let mut t = sample_track();
        t.hazards[0] = Hazard::StopLine { arc: 80.0, period: 24.0, red_fraction: 1.5, offset: 0.0 };
        assert!(t.validate().unwrap_err().contains("red_fraction"));

        let mut t = sample_track();
        t.lane_half_width = 0.0;
        assert!(t.validate().is_err());
    }

    #[test]
    fn track_parse_errors_carry_line_numbers() {
        let tracks = vec![sample_track()];
        let mut text = tracks_canonical_string(&tracks);
        text.push_str("{\"track_id\":\"t1\"}\n");
        let err = read_tracks_str(&text, "mem").unwrap_err();
        assert!(err.to_string().contains("mem:2"), "got: {err}");

        let dup = tracks_canonical_string(&tracks).repeat(2);
        let err = read_tracks_str(&dup, "mem").unwrap_err();
        assert!(err.to_string().contains("duplicate track_id"), "got: {err}");

        assert!(read_tracks_str("", "mem").is_err());
    }
}
