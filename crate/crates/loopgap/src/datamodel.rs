//! Prediction records and datasets: the offline evaluation input.
//!
//! A dataset is a line-oriented text file: a self-describing header line
//! followed by one record per line, each a small JSON object. Files written by
//! this module are canonical (fixed key order, 9-significant-digit floats), so
//! loading and re-serializing a canonical file is byte-identical.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use crate::numeric::{sig9, tree_mean};

/// Navigation command names, in index order as stored in record lines.
pub const COMMAND_NAMES: [&str; 4] = ["follow", "left", "right", "straight"];

// ── Core types ───────────────────────────────────────────────────────────────

/// A control action. `steer` in [-1, 1] (positive = right), `throttle` and
/// `brake` in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub steer: f64,
    pub throttle: f64,
    pub brake: f64,
}

impl Action {
    pub fn new(steer: f64, throttle: f64, brake: f64) -> Self {
        Action { steer, throttle, brake }
    }

    /// Net longitudinal command in [-1, 1]: throttle minus brake.
    pub fn longitudinal(&self) -> f64 {
        self.throttle - self.brake
    }

    /// Clamp every component into its legal range.
    pub fn clamped(self) -> Self {
        Action {
            steer: self.steer.clamp(-1.0, 1.0),
            throttle: self.throttle.clamp(0.0, 1.0),
            brake: self.brake.clamp(0.0, 1.0),
        }
    }
}

/// Discrete navigation command attached to each record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Follow,
    Left,
    Right,
    Straight,
}

impl Command {
    pub fn index(self) -> usize {
        match self {
            Command::Follow => 0,
            Command::Left => 1,
            Command::Right => 2,
            Command::Straight => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Command::Follow),
            1 => Some(Command::Left),
            2 => Some(Command::Right),
            3 => Some(Command::Straight),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        COMMAND_NAMES[self.index()]
    }
}

/// Observation metadata recorded with each prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationMeta {
    /// Ego speed in m/s at observation time; non-negative.
    pub speed: f64,
    pub command: Command,
}

/// An ordered ego-frame waypoint plan; points are (x, y) in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointPlan {
    pub points: Vec<[f64; 2]>,
}

impl WaypointPlan {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One hazard as seen from a recorded state: a kind-agnostic summary carrying
/// exactly what the planner needs to reproduce the response to that hazard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HazardView {
    /// Index of the hazard on its track.
    pub index: usize,
    /// Arc distance from ego to the hazard anchor, meters (negative = passed).
    pub dist_ahead: f64,
    /// Distance ahead at which a full stop is currently required, if any.
    pub stop_at: Option<f64>,
    /// Zone speed cap in m/s, if any.
    pub speed_cap: Option<f64>,
    /// Lateral tracking-target offset in meters (positive = left).
    pub shift: f64,
}

/// Simulation provenance for a record: where and when on which track the
/// state was captured, plus the hazard views active at that moment. Required
/// by closed-loop-consistent offline evaluation; absent in external datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct StateContext {
    pub track_id: String,
    pub time: f64,
    pub arc: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub hazards: Vec<HazardView>,
}

/// One evaluation record: ground truth, metadata, and K sampled predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub record_id: String,
    pub gt_action: Action,
    pub gt_waypoints: Option<WaypointPlan>,
    pub meta: ObservationMeta,
    /// K sampled action predictions, K >= 1 and constant across the dataset.
    pub samples_action: Vec<Action>,
    /// Per-sample waypoint plans; present iff `gt_waypoints` is present.
    pub samples_waypoints: Option<Vec<WaypointPlan>>,
    /// Component-wise mean of `samples_action`, clamped to legal ranges.
    pub executed_action: Action,
    pub context: Option<StateContext>,
}

impl PredictionRecord {
    /// Build a record, deriving `executed_action` from the samples.
    pub fn new(
        record_id: String,
        gt_action: Action,
        gt_waypoints: Option<WaypointPlan>,
        meta: ObservationMeta,
        samples_action: Vec<Action>,
        samples_waypoints: Option<Vec<WaypointPlan>>,
        context: Option<StateContext>,
    ) -> Self {
        let executed_action = derive_executed_action(&samples_action);
        PredictionRecord {
            record_id,
            gt_action,
            gt_waypoints,
            meta,
            samples_action,
            samples_waypoints,
            executed_action,
            context,
        }
    }

    pub fn k(&self) -> usize {
        self.samples_action.len()
    }
}

/// Component-wise mean of the samples, clamped to legal ranges.
pub fn derive_executed_action(samples: &[Action]) -> Action {
    let steer: Vec<f64> = samples.iter().map(|a| a.steer).collect();
    let throttle: Vec<f64> = samples.iter().map(|a| a.throttle).collect();
    let brake: Vec<f64> = samples.iter().map(|a| a.brake).collect();
    Action {
        steer: tree_mean(&steer),
        throttle: tree_mean(&throttle),
        brake: tree_mean(&brake),
    }
    .clamped()
}

/// Dataset-level declarations from the header line.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    /// Number of action samples per record.
    pub k: usize,
    /// Waypoints per plan; present iff the dataset carries waypoint plans.
    pub w: Option<usize>,
    /// Producing policy, when the dataset is a study artifact.
    pub policy_id: Option<String>,
    pub command_enum: Vec<String>,
}

impl DatasetHeader {
    pub fn new(k: usize, w: Option<usize>, policy_id: Option<String>) -> Self {
        DatasetHeader {
            k,
            w,
            policy_id,
            command_enum: COMMAND_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// A validated collection of prediction records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<PredictionRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_waypoints(&self) -> bool {
        self.header.w.is_some()
    }

    /// Run every dataset invariant; returns soft warnings, errors on violation.
    pub fn validate(&self) -> Result<Vec<String>, String> {
        let mut warnings = Vec::new();
        if self.records.is_empty() {
            return Err("empty dataset (no records)".to_string());
        }
        if self.header.command_enum != COMMAND_NAMES {
            return Err(format!(
                "unsupported command enum {:?}; expected {:?}",
                self.header.command_enum, COMMAND_NAMES
            ));
        }
        let mut seen = HashSet::new();
        for rec in &self.records {
            validate_record(rec, &self.header, &mut warnings)?;
            if !seen.insert(rec.record_id.as_str()) {
                return Err(format!("record '{}': duplicate record_id", rec.record_id));
            }
        }
        Ok(warnings)
    }
}

fn check_range(
    record_id: &str,
    field: &str,
    value: f64,
    lo: f64,
    hi: f64,
) -> Result<(), String> {
    if !value.is_finite() || value < lo || value > hi {
        return Err(format!(
            "record '{}': field {}: {} outside [{}, {}]",
            record_id,
            field,
            sig9(value),
            sig9(lo),
            sig9(hi)
        ));
    }
    Ok(())
}

fn validate_action(record_id: &str, prefix: &str, a: &Action) -> Result<(), String> {
    check_range(record_id, &format!("{prefix}steer"), a.steer, -1.0, 1.0)?;
    check_range(record_id, &format!("{prefix}throttle"), a.throttle, 0.0, 1.0)?;
    check_range(record_id, &format!("{prefix}brake"), a.brake, 0.0, 1.0)?;
    Ok(())
}

fn validate_plan(record_id: &str, field: &str, plan: &WaypointPlan, w: usize) -> Result<(), String> {
    if plan.len() != w {
        return Err(format!(
            "record '{}': field {}: plan has {} points, header declares w = {}",
            record_id,
            field,
            plan.len(),
            w
        ));
    }
    for (i, p) in plan.points.iter().enumerate() {
        if !p[0].is_finite() || !p[1].is_finite() {
            return Err(format!(
                "record '{}': field {}[{}]: non-finite coordinate",
                record_id, field, i
            ));
        }
    }
    Ok(())
}

fn validate_record(
    rec: &PredictionRecord,
    header: &DatasetHeader,
    warnings: &mut Vec<String>,
) -> Result<(), String> {
    let id = rec.record_id.as_str();
    if id.is_empty() {
        return Err("record '': field record_id: empty".to_string());
    }
    validate_action(id, "gt_", &rec.gt_action)?;
    validate_action(id, "executed_", &rec.executed_action)?;
    if !rec.meta.speed.is_finite() || rec.meta.speed < 0.0 {
        return Err(format!(
            "record '{}': field speed: {} is negative or non-finite",
            id,
            sig9(rec.meta.speed)
        ));
    }
    if rec.samples_action.is_empty() {
        return Err(format!("record '{}': field samples: needs K >= 1 samples", id));
    }
    if rec.samples_action.len() != header.k {
        return Err(format!(
            "record '{}': field samples: {} samples, header declares k = {}",
            id,
            rec.samples_action.len(),
            header.k
        ));
    }
    for (j, s) in rec.samples_action.iter().enumerate() {
        validate_action(id, &format!("samples[{j}]."), s)?;
    }
    match (header.w, &rec.gt_waypoints, &rec.samples_waypoints) {
        (Some(w), Some(gt), Some(samples)) => {
            validate_plan(id, "gt_waypoints", gt, w)?;
            if samples.len() != rec.samples_action.len() {
                return Err(format!(
                    "record '{}': field sample_waypoints: {} plans for {} action samples",
                    id,
                    samples.len(),
                    rec.samples_action.len()
                ));
            }
            for (j, plan) in samples.iter().enumerate() {
                validate_plan(id, &format!("sample_waypoints[{j}]"), plan, w)?;
            }
        }
        (None, None, None) => {}
        _ => {
            return Err(format!(
                "record '{}': waypoint fields must all be present (header w, gt_waypoints, \
                 sample_waypoints) or all absent",
                id
            ));
        }
    }
    if rec.gt_action.throttle > 0.5 && rec.gt_action.brake > 0.5 {
        warnings.push(format!(
            "record '{}': ground-truth throttle and brake both engaged (> 0.5)",
            id
        ));
    }
    Ok(())
}

// ── Errors ───────────────────────────────────────────────────────────────────

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Line { path: String, line: usize, msg: String },
    #[error("{path}: {msg}")]
    File { path: String, msg: String },
    #[error("{path}: empty dataset")]
    EmptyDataset { path: String },
}

// ── Parsing ──────────────────────────────────────────────────────────────────

fn obj_of(v: Value) -> Result<serde_json::Map<String, Value>, String> {
    match v {
        Value::Object(m) => Ok(m),
        other => Err(format!("expected a JSON object, got {}", kind_name(&other))),
    }
}

pub(crate) fn kind_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "bool",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

pub(crate) fn get_f64(m: &serde_json::Map<String, Value>, key: &str) -> Result<f64, String> {
    match m.get(key) {
        Some(Value::Number(n)) => n
            .as_f64()
            .ok_or_else(|| format!("field {key}: not representable as f64")),
        Some(other) => Err(format!("field {key}: expected number, got {}", kind_name(other))),
        None => Err(format!("field {key}: missing")),
    }
}

pub(crate) fn get_usize(m: &serde_json::Map<String, Value>, key: &str) -> Result<usize, String> {
    match m.get(key) {
        Some(Value::Number(n)) => n
            .as_u64()
            .map(|u| u as usize)
            .ok_or_else(|| format!("field {key}: expected non-negative integer")),
        Some(other) => Err(format!("field {key}: expected integer, got {}", kind_name(other))),
        None => Err(format!("field {key}: missing")),
    }
}

pub(crate) fn get_str(m: &serde_json::Map<String, Value>, key: &str) -> Result<String, String> {
    match m.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(other) => Err(format!("field {key}: expected string, got {}", kind_name(other))),
        None => Err(format!("field {key}: missing")),
    }
}

pub(crate) fn get_array<'v>(m: &'v serde_json::Map<String, Value>, key: &str) -> Result<&'v [Value], String> {
    match m.get(key) {
        Some(Value::Array(a)) => Ok(a),
        Some(other) => Err(format!("field {key}: expected array, got {}", kind_name(other))),
        None => Err(format!("field {key}: missing")),
    }
}

fn parse_triple(v: &Value, field: &str) -> Result<Action, String> {
    let arr = match v {
        Value::Array(a) if a.len() == 3 => a,
        Value::Array(a) => {
            return Err(format!("field {field}: expected [steer, throttle, brake], got {} values", a.len()))
        }
        other => return Err(format!("field {field}: expected array, got {}", kind_name(other))),
    };
    let mut c = [0.0; 3];
    for (i, v) in arr.iter().enumerate() {
        c[i] = v
            .as_f64()
            .ok_or_else(|| format!("field {field}[{i}]: expected number"))?;
    }
    Ok(Action::new(c[0], c[1], c[2]))
}

fn parse_point(v: &Value, field: &str) -> Result<[f64; 2], String> {
    let arr = match v {
        Value::Array(a) if a.len() == 2 => a,
        _ => return Err(format!("field {field}: expected [x, y] pair")),
    };
    let x = arr[0].as_f64().ok_or_else(|| format!("field {field}: expected number"))?;
    let y = arr[1].as_f64().ok_or_else(|| format!("field {field}: expected number"))?;
    Ok([x, y])
}

fn parse_plan(v: &Value, field: &str) -> Result<WaypointPlan, String> {
    let arr = match v {
        Value::Array(a) => a,
        other => return Err(format!("field {field}: expected array, got {}", kind_name(other))),
    };
    let mut points = Vec::with_capacity(arr.len());
    for (i, p) in arr.iter().enumerate() {
        points.push(parse_point(p, &format!("{field}[{i}]"))?);
    }
    Ok(WaypointPlan { points })
}

fn parse_context(v: &Value) -> Result<StateContext, String> {
    let m = match v {
        Value::Object(m) => m,
        other => return Err(format!("field ctx: expected object, got {}", kind_name(other))),
    };
    let mut hazards = Vec::new();
    if let Some(hv) = m.get("hazards") {
        let arr = match hv {
            Value::Array(a) => a,
            other => return Err(format!("field ctx.hazards: expected array, got {}", kind_name(other))),
        };
        for (i, h) in arr.iter().enumerate() {
            let hm = match h {
                Value::Object(hm) => hm,
                _ => return Err(format!("field ctx.hazards[{i}]: expected object")),
            };
            hazards.push(HazardView {
                index: get_usize(hm, "i").map_err(|e| format!("ctx.hazards[{i}]: {e}"))?,
                dist_ahead: get_f64(hm, "dist").map_err(|e| format!("ctx.hazards[{i}]: {e}"))?,
                stop_at: match hm.get("stop_at") {
                    None | Some(Value::Null) => None,
                    Some(v) => Some(v.as_f64().ok_or_else(|| {
                        format!("ctx.hazards[{i}].stop_at: expected number")
                    })?),
                },
                speed_cap: match hm.get("cap") {
                    None | Some(Value::Null) => None,
                    Some(v) => Some(
                        v.as_f64()
                            .ok_or_else(|| format!("ctx.hazards[{i}].cap: expected number"))?,
                    ),
                },
                shift: get_f64(hm, "shift").map_err(|e| format!("ctx.hazards[{i}]: {e}"))?,
            });
        }
    }
    Ok(StateContext {
        track_id: get_str(m, "track_id").map_err(|e| format!("ctx: {e}"))?,
        time: get_f64(m, "time").map_err(|e| format!("ctx: {e}"))?,
        arc: get_f64(m, "arc").map_err(|e| format!("ctx: {e}"))?,
        x: get_f64(m, "x").map_err(|e| format!("ctx: {e}"))?,
        y: get_f64(m, "y").map_err(|e| format!("ctx: {e}"))?,
        heading: get_f64(m, "heading").map_err(|e| format!("ctx: {e}"))?,
        hazards,
    })
}

const RECORD_KEYS: [&str; 10] = [
    "record_id",
    "gt_steer",
    "gt_throttle",
    "gt_brake",
    "speed",
    "command",
    "samples",
    "gt_waypoints",
    "sample_waypoints",
    "ctx",
];

fn parse_record(
    m: &serde_json::Map<String, Value>,
    command_enum_len: usize,
    warnings: &mut Vec<String>,
    line: usize,
) -> Result<PredictionRecord, String> {
    for key in m.keys() {
        if !RECORD_KEYS.contains(&key.as_str()) {
            warnings.push(format!("line {line}: unknown key '{key}' ignored"));
        }
    }
    let record_id = get_str(m, "record_id")?;
    let gt_action = Action::new(get_f64(m, "gt_steer")?, get_f64(m, "gt_throttle")?, get_f64(m, "gt_brake")?);
    let speed = get_f64(m, "speed")?;
    let cmd_index = get_usize(m, "command")?;
    if cmd_index >= command_enum_len {
        return Err(format!(
            "record '{record_id}': field command: index {cmd_index} outside declared enum of {command_enum_len}"
        ));
    }
    let command = Command::from_index(cmd_index)
        .ok_or_else(|| format!("record '{record_id}': field command: index {cmd_index} unsupported"))?;
    let mut samples = Vec::new();
    for (j, s) in get_array(m, "samples")?.iter().enumerate() {
        samples.push(parse_triple(s, &format!("samples[{j}]"))?);
    }
    let gt_waypoints = match m.get("gt_waypoints") {
        None | Some(Value::Null) => None,
        Some(v) => Some(parse_plan(v, "gt_waypoints")?),
    };
    let samples_waypoints = match m.get("sample_waypoints") {
        None | Some(Value::Null) => None,
        Some(Value::Array(arr)) => {
            let mut plans = Vec::with_capacity(arr.len());
            for (j, p) in arr.iter().enumerate() {
                plans.push(parse_plan(p, &format!("sample_waypoints[{j}]"))?);
            }
            Some(plans)
        }
        Some(other) => {
            return Err(format!(
                "field sample_waypoints: expected array, got {}",
                kind_name(other)
            ))
        }
    };
    let context = match m.get("ctx") {
        None | Some(Value::Null) => None,
        Some(v) => Some(parse_context(v)?),
    };
    Ok(PredictionRecord::new(
        record_id,
        gt_action,
        gt_waypoints,
        ObservationMeta { speed, command },
        samples,
        samples_waypoints,
        context,
    ))
}

const HEADER_KEYS: [&str; 5] = ["type", "k", "w", "policy_id", "command_enum"];

fn parse_header(
    m: &serde_json::Map<String, Value>,
    warnings: &mut Vec<String>,
) -> Result<DatasetHeader, String> {
    for key in m.keys() {
        if !HEADER_KEYS.contains(&key.as_str()) {
            warnings.push(format!("line 1: unknown header key '{key}' ignored"));
        }
    }
    let ty = get_str(m, "type")?;
    if ty != "dataset" {
        return Err(format!("header type is '{ty}', expected 'dataset'"));
    }
    let k = get_usize(m, "k")?;
    if k == 0 {
        return Err("field k: must be >= 1".to_string());
    }
    let w = match m.get("w") {
        None | Some(Value::Null) => None,
        Some(_) => Some(get_usize(m, "w")?),
    };
    if w == Some(0) {
        return Err("field w: must be >= 1 when present".to_string());
    }
    let policy_id = match m.get("policy_id") {
        None | Some(Value::Null) => None,
        Some(_) => Some(get_str(m, "policy_id")?),
    };
    let command_enum = get_array(m, "command_enum")?
        .iter()
        .map(|v| {
            v.as_str()
                .map(|s| s.to_string())
                .ok_or_else(|| "field command_enum: expected strings".to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DatasetHeader { k, w, policy_id, command_enum })
}

/// Parse a dataset from text. `label` names the source in errors (a path).
/// Returns the dataset plus soft warnings (unknown keys, suspicious values).
pub fn read_dataset_str(text: &str, label: &str) -> Result<(Dataset, Vec<String>), DataError> {
    let mut warnings = Vec::new();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header_line) = lines.next().ok_or_else(|| DataError::EmptyDataset {
        path: label.to_string(),
    })?;
    let header_val: Value = serde_json::from_str(header_line).map_err(|e| DataError::Line {
        path: label.to_string(),
        line: 1,
        msg: format!("malformed header: {e}"),
    })?;
    let header_map = obj_of(header_val).map_err(|msg| DataError::Line {
        path: label.to_string(),
        line: 1,
        msg,
    })?;
    let header = parse_header(&header_map, &mut warnings).map_err(|msg| DataError::Line {
        path: label.to_string(),
        line: 1,
        msg,
    })?;

    let mut records = Vec::new();
    let mut record_lines = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let val: Value = serde_json::from_str(line).map_err(|e| DataError::Line {
            path: label.to_string(),
            line: line_no,
            msg: format!("malformed record: {e}"),
        })?;
        let map = obj_of(val).map_err(|msg| DataError::Line {
            path: label.to_string(),
            line: line_no,
            msg,
        })?;
        let record = parse_record(&map, header.command_enum.len(), &mut warnings, line_no)
            .map_err(|msg| DataError::Line {
                path: label.to_string(),
                line: line_no,
                msg,
            })?;
        records.push(record);
        record_lines.push(line_no);
    }
    if records.is_empty() {
        return Err(DataError::EmptyDataset { path: label.to_string() });
    }
    if header.command_enum != COMMAND_NAMES {
        return Err(DataError::Line {
            path: label.to_string(),
            line: 1,
            msg: format!(
                "unsupported command enum {:?}; expected {:?}",
                header.command_enum, COMMAND_NAMES
            ),
        });
    }
    // Record-level invariants, attributed to their lines.
    let mut seen = HashSet::new();
    for (rec, &line_no) in records.iter().zip(&record_lines) {
        validate_record(rec, &header, &mut warnings).map_err(|msg| DataError::Line {
            path: label.to_string(),
            line: line_no,
            msg,
        })?;
        if !seen.insert(rec.record_id.clone()) {
            return Err(DataError::Line {
                path: label.to_string(),
                line: line_no,
                msg: format!("record '{}': duplicate record_id", rec.record_id),
            });
        }
    }
    Ok((Dataset { header, records }, warnings))
}

/// Load a dataset file. See [`read_dataset_str`].
pub fn read_dataset(path: &Path) -> Result<(Dataset, Vec<String>), DataError> {
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_dataset_str(&text, &path.display().to_string())
}

// ── Canonical serialization ──────────────────────────────────────────────────

fn push_triple(out: &mut String, a: &Action) {
    let _ = write!(out, "[{},{},{}]", sig9(a.steer), sig9(a.throttle), sig9(a.brake));
}

fn push_plan(out: &mut String, plan: &WaypointPlan) {
    out.push('[');
    for (i, p) in plan.points.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "[{},{}]", sig9(p[0]), sig9(p[1]));
    }
    out.push(']');
}

fn push_context(out: &mut String, ctx: &StateContext) {
    let _ = write!(
        out,
        "{{\"track_id\":{},\"time\":{},\"arc\":{},\"x\":{},\"y\":{},\"heading\":{},\"hazards\":[",
        serde_json::to_string(&ctx.track_id).expect("string encodes"),
        sig9(ctx.time),
        sig9(ctx.arc),
        sig9(ctx.x),
        sig9(ctx.y),
        sig9(ctx.heading)
    );
    for (i, h) in ctx.hazards.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{{\"i\":{},\"dist\":{}", h.index, sig9(h.dist_ahead));
        if let Some(s) = h.stop_at {
            let _ = write!(out, ",\"stop_at\":{}", sig9(s));
        }
        if let Some(c) = h.speed_cap {
            let _ = write!(out, ",\"cap\":{}", sig9(c));
        }
        let _ = write!(out, ",\"shift\":{}}}", sig9(h.shift));
    }
    out.push_str("]}");
}

impl Dataset {
    /// Canonical text form: header line plus one record line each, fixed key
    /// order, [`sig9`] float formatting, trailing newline.
    pub fn canonical_string(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{{\"type\":\"dataset\",\"k\":{}", self.header.k);
        if let Some(w) = self.header.w {
            let _ = write!(out, ",\"w\":{w}");
        }
        if let Some(pid) = &self.header.policy_id {
            let _ = write!(out, ",\"policy_id\":{}", serde_json::to_string(pid).expect("string encodes"));
        }
        out.push_str(",\"command_enum\":[");
        for (i, name) in self.header.command_enum.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", serde_json::to_string(name).expect("string encodes"));
        }
        out.push_str("]}\n");

        for rec in &self.records {
            let _ = write!(
                out,
                "{{\"record_id\":{},\"gt_steer\":{},\"gt_throttle\":{},\"gt_brake\":{},\"speed\":{},\"command\":{},\"samples\":[",
                serde_json::to_string(&rec.record_id).expect("string encodes"),
                sig9(rec.gt_action.steer),
                sig9(rec.gt_action.throttle),
                sig9(rec.gt_action.brake),
                sig9(rec.meta.speed),
                rec.meta.command.index()
            );
            for (j, s) in rec.samples_action.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                push_triple(&mut out, s);
            }
            out.push(']');
            if let Some(gt) = &rec.gt_waypoints {
                out.push_str(",\"gt_waypoints\":");
                push_plan(&mut out, gt);
            }
            if let Some(plans) = &rec.samples_waypoints {
                out.push_str(",\"sample_waypoints\":[");
                for (j, plan) in plans.iter().enumerate() {
                    if j > 0 {
                        out.push(',');
                    }
                    push_plan(&mut out, plan);
                }
                out.push(']');
            }
            if let Some(ctx) = &rec.context {
                out.push_str(",\"ctx\":");
                push_context(&mut out, ctx);
            }
            out.push_str("}\n");
        }
        out
    }
}

/// Write a dataset in canonical form.
pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<(), DataError> {
    std::fs::write(path, ds.canonical_string()).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}
