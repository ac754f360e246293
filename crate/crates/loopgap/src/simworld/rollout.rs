//! Closed-loop episode simulation: a kinematic bicycle plant, scripted
//! hazard dynamics, the hazard views a controller perceives, infraction
//! detectors, and terminal conditions.
//!
//! The controller sees each hazard only through a `HazardView`; views carry
//! the full demanded response (stop point, speed cap, lateral shift), so a
//! recorded view stream is enough to reproduce control decisions offline.

use crate::datamodel::{Action, HazardView};
use crate::numeric::canon;
use crate::online::{EpisodeLog, InfractionEvent, InfractionKind, Terminal};
use crate::simworld::geometry::Vec2;
use crate::simworld::planner::EgoState;
use crate::simworld::track::{stop_line_red, Hazard, Track};

/// Plant and environment constants for episode simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    /// Control period, seconds.
    pub dt: f64,
    /// Bicycle wheelbase, meters (plant side; the planner models the same).
    pub wheelbase: f64,
    /// Steering angle at full steer command, radians.
    pub max_steer: f64,
    /// Acceleration at full throttle, m/s^2.
    pub max_accel: f64,
    /// Deceleration at full brake, m/s^2.
    pub max_brake: f64,
    /// Speed ceiling, m/s.
    pub max_speed: f64,
    /// Hazard view window behind the ego, meters (negative).
    pub view_near: f64,
    /// Hazard view window ahead of the ego, meters.
    pub view_far: f64,
    /// Episode wall-clock limit, seconds.
    pub timeout: f64,
    /// Speed under which the ego counts as stationary, m/s.
    pub blocked_speed: f64,
    /// Continuous stationary time that ends the episode, seconds.
    pub blocked_after: f64,
    /// Lateral offset that counts as leaving the route, meters.
    pub deviation_lateral: f64,
    /// Arc shortfall still counting as route completion, meters.
    pub finish_slack: f64,
    /// Ego collision radius, meters.
    pub ego_radius: f64,
    /// Crossing-agent collision radius, meters.
    pub agent_radius: f64,
    /// Lateral offset a crossing agent starts from, meters (left of route).
    pub agent_start_lateral: f64,
    /// Lateral offset past which a crossing agent has cleared the lane.
    pub agent_clear_lateral: f64,
    /// Gap under which a lead vehicle imposes its speed, meters.
    pub lead_follow_dist: f64,
    /// Center distance to a lead vehicle that counts as a collision, meters.
    pub lead_gap_collision: f64,
    /// Lateral tracking shift demanded around a static obstruction, meters.
    pub static_shift: f64,
    /// Speed cap demanded around a static obstruction, m/s.
    pub static_cap: f64,
    /// Speed floor used when estimating arrival times, m/s.
    pub eta_speed_floor: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            dt: 0.05,
            wheelbase: 2.5,
            max_steer: 35.0_f64.to_radians(),
            max_accel: 3.0,
            max_brake: 6.0,
            max_speed: 10.0,
            view_near: -5.0,
            view_far: 40.0,
            timeout: 300.0,
            blocked_speed: 0.1,
            blocked_after: 180.0,
            deviation_lateral: 30.0,
            finish_slack: 0.5,
            ego_radius: 0.9,
            agent_radius: 0.6,
            agent_start_lateral: 6.0,
            agent_clear_lateral: -1.6,
            lead_follow_dist: 15.0,
            lead_gap_collision: 2.5,
            static_shift: -1.2,
            static_cap: 4.0,
            eta_speed_floor: 1.0,
        }
    }
}

/// Crossing-agent lifecycle.
#[derive(Debug, Clone, Copy, PartialEq)]
enum AgentPhase {
    Waiting,
    Crossing { t0: f64 },
    Done,
}

/// Mutable per-hazard simulation state (only crossing agents carry any).
#[derive(Debug, Clone, Copy)]
struct HazardState {
    phase: AgentPhase,
}

fn agent_lateral(t: f64, t0: f64, crossing_speed: f64, p: &SimParams) -> f64 {
    p.agent_start_lateral - crossing_speed * (t - t0)
}

fn lead_arc(arc0: f64, speed: f64, t: f64) -> f64 {
    arc0 + speed * t
}

fn lead_gone(arc0: f64, speed: f64, active_length: f64, route_len: f64, t: f64) -> bool {
    let arc = lead_arc(arc0, speed, t);
    arc > arc0 + active_length || arc > route_len - 1.0
}

fn advance_hazards(track: &Track, states: &mut [HazardState], ego_arc: f64, t: f64, p: &SimParams) {
    for (h, st) in track.hazards.iter().zip(states.iter_mut()) {
        if let Hazard::CrossingAgent { arc, trigger_distance, crossing_speed } = h {
            match st.phase {
                AgentPhase::Waiting => {
                    let dist = arc - ego_arc;
                    if dist > 0.0 && dist <= *trigger_distance {
                        st.phase = AgentPhase::Crossing { t0: t };
                    }
                }
                AgentPhase::Crossing { t0 } => {
                    if agent_lateral(t, t0, *crossing_speed, p) < p.agent_clear_lateral {
                        st.phase = AgentPhase::Done;
                    }
                }
                AgentPhase::Done => {}
            }
        }
    }
}

/// The hazard views perceivable from (ego_arc, ego_v) at time t. Every hazard
/// within the view window emits a view; the demanded response fields are set
/// only while a response is actually required.
fn build_views(
    track: &Track,
    states: &[HazardState],
    ego_arc: f64,
    ego_v: f64,
    t: f64,
    p: &SimParams,
) -> Vec<HazardView> {
    let mut views = Vec::new();
    for (i, h) in track.hazards.iter().enumerate() {
        match h {
            Hazard::StopLine { arc, period, red_fraction, offset } => {
                let dist = arc - ego_arc;
                if !(p.view_near..=p.view_far).contains(&dist) {
                    continue;
                }
                let stop_at = if dist > 0.0 {
                    let eta = dist / ego_v.max(p.eta_speed_floor);
                    let red_now = stop_line_red(*period, *red_fraction, *offset, t);
                    let red_then = stop_line_red(*period, *red_fraction, *offset, t + eta);
                    (red_now || red_then).then_some(dist)
                } else {
                    None
                };
                views.push(HazardView { index: i, dist_ahead: dist, stop_at, speed_cap: None, shift: 0.0 });
            }
            Hazard::CrossingAgent { arc, .. } => {
                let dist = arc - ego_arc;
                if !(p.view_near..=p.view_far).contains(&dist) {
                    continue;
                }
                let stop_at = match states[i].phase {
                    AgentPhase::Crossing { .. } if dist > 0.0 => Some(dist),
                    _ => None,
                };
                views.push(HazardView { index: i, dist_ahead: dist, stop_at, speed_cap: None, shift: 0.0 });
            }
            Hazard::StaticObstacle { arc, .. } => {
                let dist = arc - ego_arc;
                if !(p.view_near..=p.view_far).contains(&dist) {
                    continue;
                }
                views.push(HazardView {
                    index: i,
                    dist_ahead: dist,
                    stop_at: None,
                    speed_cap: Some(p.static_cap),
                    shift: p.static_shift,
                });
            }
            Hazard::LeadVehicle { arc0, speed, active_length } => {
                if lead_gone(*arc0, *speed, *active_length, track.route_length(), t) {
                    continue;
                }
                let gap = lead_arc(*arc0, *speed, t) - ego_arc;
                if !(p.view_near..=p.view_far).contains(&gap) {
                    continue;
                }
                let speed_cap = (gap < p.lead_follow_dist).then_some(*speed);
                views.push(HazardView { index: i, dist_ahead: gap, stop_at: None, speed_cap, shift: 0.0 });
            }
        }
    }
    views
}

/// One simulation step as the controller saw it.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub step: usize,
    pub time: f64,
    pub ego: EgoState,
    /// Signed lateral offset from the centerline (positive = left).
    pub lateral: f64,
    pub views: Vec<HazardView>,
    /// The action the plant executed from this state.
    pub action: Action,
}

/// Result of one closed-loop episode.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutOutcome {
    pub terminal: Terminal,
    pub completed_length: f64,
    pub duration: f64,
    pub events: Vec<InfractionEvent>,
    pub trace: Option<Vec<TraceStep>>,
}

/// Run one episode. The controller maps perceived state to an action; the
/// plant, hazard scripts, and detectors are fixed by `p`.
pub fn rollout<C>(track: &Track, controller: &mut C, p: &SimParams, keep_trace: bool) -> RolloutOutcome
where
    C: FnMut(&EgoState, &[HazardView]) -> Action,
{
    let centerline = &track.centerline;
    let route_len = centerline.length();
    let start_tangent = centerline.tangent_at(0.0);
    let mut ego = EgoState {
        pos: centerline.point_at(0.0),
        heading: start_tangent.angle(),
        v: 0.0,
        arc: 0.0,
    };
    let mut lateral = 0.0;
    let mut states: Vec<HazardState> =
        track.hazards.iter().map(|_| HazardState { phase: AgentPhase::Waiting }).collect();
    let mut events: Vec<InfractionEvent> = Vec::new();
    let mut trace = keep_trace.then(Vec::new);
    let mut completed = 0.0_f64;
    let mut low_since: Option<f64> = Some(0.0);
    // Open lane excursion: (start time, arc length accumulated outside).
    let mut outside: Option<(f64, f64)> = None;

    let mut step = 0usize;
    let (terminal, duration) = loop {
        let t = step as f64 * p.dt;
        advance_hazards(track, &mut states, ego.arc, t, p);
        let views = build_views(track, &states, ego.arc, ego.v, t, p);
        let action = controller(&ego, &views).clamped();
        if let Some(tr) = trace.as_mut() {
            tr.push(TraceStep { step, time: t, ego, lateral, views: views.clone(), action });
        }

        // Plant: semi-implicit speed, then heading, then position. Positive
        // steer command turns right (heading decreases).
        let accel = action.throttle * p.max_accel - action.brake * p.max_brake;
        let v = (ego.v + accel * p.dt).clamp(0.0, p.max_speed);
        let heading = ego.heading + (v / p.wheelbase) * (-action.steer * p.max_steer).tan() * p.dt;
        let pos = ego.pos.add(Vec2::new(heading.cos(), heading.sin()).scale(v * p.dt));
        let proj = centerline.project(pos);
        let prev_arc = ego.arc;
        ego = EgoState { pos, heading, v, arc: proj.arc };
        lateral = proj.lateral;
        let t = (step + 1) as f64 * p.dt;
        completed = completed.max(proj.arc.min(route_len));

        // Red-light crossings (non-terminal).
        for h in &track.hazards {
            if let Hazard::StopLine { arc, period, red_fraction, offset } = h {
                if prev_arc < *arc
                    && proj.arc >= *arc
                    && stop_line_red(*period, *red_fraction, *offset, t)
                {
                    events.push(InfractionEvent { kind: InfractionKind::RedLight, time: t, length: None });
                }
            }
        }

        // Lane excursion accounting.
        if lateral.abs() > track.lane_half_width {
            let gained = (proj.arc - prev_arc).max(0.0);
            match outside.as_mut() {
                Some((_, len)) => *len += gained,
                None => outside = Some((t, gained)),
            }
        } else if let Some((start, len)) = outside.take() {
            events.push(InfractionEvent {
                kind: InfractionKind::OutsideRouteLane,
                time: start,
                length: Some(len),
            });
        }

        // Collisions (terminal).
        let mut collision: Option<InfractionKind> = None;
        for (i, h) in track.hazards.iter().enumerate() {
            match h {
                Hazard::CrossingAgent { arc, crossing_speed, .. } => {
                    if let AgentPhase::Crossing { t0 } = states[i].phase {
                        let lat = agent_lateral(t, t0, *crossing_speed, p);
                        let agent_pos = centerline
                            .point_at(*arc)
                            .add(centerline.tangent_at(*arc).left_normal().scale(lat));
                        if ego.pos.dist(agent_pos) < p.ego_radius + p.agent_radius {
                            collision = Some(InfractionKind::CollisionPedestrian);
                        }
                    }
                }
                Hazard::StaticObstacle { arc, lat_offset, radius } => {
                    let center = centerline
                        .point_at(*arc)
                        .add(centerline.tangent_at(*arc).left_normal().scale(*lat_offset));
                    if ego.pos.dist(center) < p.ego_radius + radius {
                        collision = Some(InfractionKind::CollisionStatic);
                    }
                }
                Hazard::LeadVehicle { arc0, speed, active_length } => {
                    if !lead_gone(*arc0, *speed, *active_length, route_len, t) {
                        let lead_pos = centerline.point_at(lead_arc(*arc0, *speed, t).min(route_len));
                        if ego.pos.dist(lead_pos) < p.lead_gap_collision {
                            collision = Some(InfractionKind::CollisionVehicle);
                        }
                    }
                }
                Hazard::StopLine { .. } => {}
            }
            if collision.is_some() {
                break;
            }
        }
        if let Some(kind) = collision {
            events.push(InfractionEvent { kind, time: t, length: None });
            break (Terminal::Collision, t);
        }

        if lateral.abs() > p.deviation_lateral {
            break (Terminal::Deviation, t);
        }
        if proj.arc >= route_len - p.finish_slack {
            completed = route_len;
            break (Terminal::Finished, t);
        }
        if t >= p.timeout {
            break (Terminal::Timeout, t);
        }
        if v < p.blocked_speed {
            let since = *low_since.get_or_insert(t);
            if t - since >= p.blocked_after {
                break (Terminal::Blocked, t);
            }
        } else {
            low_since = None;
        }
        step += 1;
    };

    if let Some((start, len)) = outside.take() {
        events.push(InfractionEvent {
            kind: InfractionKind::OutsideRouteLane,
            time: start,
            length: Some(len),
        });
    }

    RolloutOutcome { terminal, completed_length: completed, duration, events, trace }
}

/// Assemble a scoring log from an outcome, putting every float on the
/// canonical grid so in-memory logs match their file form exactly.
pub fn episode_log(
    episode_id: &str,
    policy_id: &str,
    track: &Track,
    outcome: &RolloutOutcome,
) -> EpisodeLog {
    EpisodeLog {
        episode_id: episode_id.to_string(),
        policy_id: policy_id.to_string(),
        track_id: track.track_id.clone(),
        route_length: canon(track.route_length()),
        completed_length: canon(outcome.completed_length.min(track.route_length())),
        duration: canon(outcome.duration),
        terminal: outcome.terminal,
        events: outcome
            .events
            .iter()
            .map(|e| InfractionEvent { kind: e.kind, time: canon(e.time), length: e.length.map(canon) })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simworld::geometry::Polyline;
    use crate::simworld::planner::{plan, PlannerParams};

    fn straight_track(len: f64, hazards: Vec<Hazard>) -> Track {
        Track {
            track_id: "s".to_string(),
            centerline: Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(len, 0.0)]).unwrap(),
            lane_half_width: 2.0,
            speed_limit: 10.0,
            hazards,
        }
    }

    fn run_expert(track: &Track, p: &SimParams) -> RolloutOutcome {
        let pp = PlannerParams::default();
        let centerline = track.centerline.clone();
        let mut ctrl = move |ego: &EgoState, views: &[HazardView]| plan(&centerline, ego, views, &pp);
        rollout(track, &mut ctrl, p, false)
    }

    fn blind_expert(track: &Track, p: &SimParams) -> RolloutOutcome {
        let pp = PlannerParams::default();
        let centerline = track.centerline.clone();
        let mut ctrl = move |ego: &EgoState, _views: &[HazardView]| plan(&centerline, ego, &[], &pp);
        rollout(track, &mut ctrl, p, false)
    }

    #[test]
    fn expert_finishes_an_empty_straight() {
        let track = straight_track(300.0, vec![]);
        let out = run_expert(&track, &SimParams::default());
        assert_eq!(out.terminal, Terminal::Finished);
        assert_eq!(out.completed_length, 300.0);
        assert!(out.events.is_empty());
        assert!(out.duration < 60.0, "duration {}", out.duration);
    }

    #[test]
    fn expert_waits_out_a_red_light() {
        // Red for the first 30 s; an 8 m/s approach reaches 150 m in ~21 s.
        let track = straight_track(
            300.0,
            vec![Hazard::StopLine { arc: 150.0, period: 60.0, red_fraction: 0.5, offset: 0.0 }],
        );
        let out = run_expert(&track, &SimParams::default());
        assert_eq!(out.terminal, Terminal::Finished);
        assert!(out.events.is_empty(), "events: {:?}", out.events);
        assert!(out.duration > 30.0, "should have waited for green, took {}", out.duration);
    }

    #[test]
    fn ignored_red_light_is_an_infraction_not_a_crash() {
        // Red nearly always: a blind run crosses on red but still finishes.
        let track = straight_track(
            300.0,
            vec![Hazard::StopLine { arc: 150.0, period: 1000.0, red_fraction: 0.9, offset: 0.0 }],
        );
        let out = blind_expert(&track, &SimParams::default());
        assert_eq!(out.terminal, Terminal::Finished);
        let kinds: Vec<_> = out.events.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![InfractionKind::RedLight]);
    }

    #[test]
    fn expert_yields_to_a_crossing_agent() {
        let track = straight_track(
            300.0,
            vec![Hazard::CrossingAgent { arc: 150.0, trigger_distance: 25.0, crossing_speed: 1.5 }],
        );
        let free = run_expert(&straight_track(300.0, vec![]), &SimParams::default());
        let out = run_expert(&track, &SimParams::default());
        assert_eq!(out.terminal, Terminal::Finished);
        assert!(out.events.is_empty(), "events: {:?}", out.events);
        assert!(out.duration > free.duration + 2.0, "should have yielded");
    }

    #[test]
    fn ignored_crossing_agent_is_hit() {
        let track = straight_track(
            300.0,
            vec![Hazard::CrossingAgent { arc: 150.0, trigger_distance: 25.0, crossing_speed: 1.5 }],
        );
        let out = blind_expert(&track, &SimParams::default());
        assert_eq!(out.terminal, Terminal::Collision);
        let kinds: Vec<_> = out.events.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![InfractionKind::CollisionPedestrian]);
        assert!(out.completed_length < 160.0);
    }

    #[test]
    fn expert_shifts_around_a_static_obstruction() {
        let track = straight_track(
            300.0,
            vec![Hazard::StaticObstacle { arc: 150.0, lat_offset: 0.9, radius: 0.6 }],
        );
        let out = run_expert(&track, &SimParams::default());
        assert_eq!(out.terminal, Terminal::Finished);
        assert!(out.events.is_empty(), "events: {:?}", out.events);
    }

    #[test]
    fn ignored_static_obstruction_is_hit() {
        let track = straight_track(
            300.0,
            vec![Hazard::StaticObstacle { arc: 150.0, lat_offset: 0.9, radius: 0.6 }],
        );
        let out = blind_expert(&track, &SimParams::default());
        assert_eq!(out.terminal, Terminal::Collision);
        let kinds: Vec<_> = out.events.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![InfractionKind::CollisionStatic]);
    }

    #[test]
    fn expert_follows_a_lead_vehicle() {
        let track = straight_track(
            400.0,
            vec![Hazard::LeadVehicle { arc0: 60.0, speed: 4.0, active_length: 200.0 }],
        );
        let out = run_expert(&track, &SimParams::default());
        assert_eq!(out.terminal, Terminal::Finished);
        assert!(out.events.is_empty(), "events: {:?}", out.events);
        // Following at lead speed over part of the route takes extra time.
        let free = run_expert(&straight_track(400.0, vec![]), &SimParams::default());
        assert!(out.duration > free.duration + 5.0);
    }

    #[test]
    fn ignored_lead_vehicle_is_rear_ended() {
        let track = straight_track(
            400.0,
            vec![Hazard::LeadVehicle { arc0: 60.0, speed: 4.0, active_length: 300.0 }],
        );
        let out = blind_expert(&track, &SimParams::default());
        assert_eq!(out.terminal, Terminal::Collision);
        let kinds: Vec<_> = out.events.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![InfractionKind::CollisionVehicle]);
    }

    #[test]
    fn no_throttle_ends_blocked() {
        let track = straight_track(300.0, vec![]);
        let mut ctrl = |_: &EgoState, _: &[HazardView]| Action::new(0.0, 0.0, 0.0);
        let out = rollout(&track, &mut ctrl, &SimParams::default(), false);
        assert_eq!(out.terminal, Terminal::Blocked);
        assert!((out.duration - 180.0).abs() < 0.1, "duration {}", out.duration);
        assert_eq!(out.completed_length, 0.0);
    }

    #[test]
    fn hard_left_leaves_the_route() {
        let track = straight_track(300.0, vec![]);
        let mut ctrl = |_: &EgoState, _: &[HazardView]| Action::new(-1.0, 1.0, 0.0);
        let p = SimParams { deviation_lateral: 5.0, ..SimParams::default() };
        let out = rollout(&track, &mut ctrl, &p, false);
        assert_eq!(out.terminal, Terminal::Deviation);
    }

    #[test]
    fn lane_excursion_is_logged_with_its_length() {
        // Track a target 3 m left of the centerline: outside the 2 m lane.
        let track = straight_track(300.0, vec![]);
        let pp = PlannerParams::default();
        let centerline = track.centerline.clone();
        let mut ctrl = move |ego: &EgoState, _: &[HazardView]| {
            let shifted = [HazardView {
                index: 0,
                dist_ahead: 10.0,
                stop_at: None,
                speed_cap: None,
                shift: 3.0,
            }];
            plan(&centerline, ego, &shifted, &pp)
        };
        let out = rollout(&track, &mut ctrl, &SimParams::default(), false);
        assert_eq!(out.terminal, Terminal::Finished);
        assert_eq!(out.events.len(), 1, "events: {:?}", out.events);
        let e = &out.events[0];
        assert_eq!(e.kind, InfractionKind::OutsideRouteLane);
        let len = e.length.unwrap();
        assert!(len > 200.0 && len <= 300.0, "length {len}");
    }

    #[test]
    fn red_at_arrival_demands_a_stop_early() {
        // Light turns red only 3 s from now; an 8 m/s ego 20 m out arrives
        // in ~2.5 s on green, so no demand. From 30 m out (3.75 s) the
        // arrival falls in the red phase and the demand appears.
        let track = straight_track(
            300.0,
            vec![Hazard::StopLine { arc: 150.0, period: 100.0, red_fraction: 0.5, offset: 97.0 }],
        );
        let states: Vec<HazardState> =
            track.hazards.iter().map(|_| HazardState { phase: AgentPhase::Waiting }).collect();
        let p = SimParams::default();
        let near = build_views(&track, &states, 130.0, 8.0, 0.0, &p);
        assert_eq!(near[0].stop_at, None);
        let far = build_views(&track, &states, 120.0, 8.0, 0.0, &p);
        assert_eq!(far[0].stop_at, Some(30.0));
    }

    #[test]
    fn rollouts_are_deterministic() {
        let track = straight_track(
            300.0,
            vec![Hazard::CrossingAgent { arc: 150.0, trigger_distance: 25.0, crossing_speed: 1.5 }],
        );
        let a = run_expert(&track, &SimParams::default());
        let b = run_expert(&track, &SimParams::default());
        assert_eq!(episode_log("e", "p", &track, &a), episode_log("e", "p", &track, &b));
    }
}
