//! Deterministic expert planner: pure-pursuit steering toward a (possibly
//! laterally shifted) centerline target, plus rule-based longitudinal control
//! that obeys stop demands and speed caps from hazard views.

use crate::datamodel::{Action, HazardView};
use crate::simworld::geometry::{Polyline, Vec2};

/// Tuning constants for the expert planner and the vehicle it controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerParams {
    /// Effective wheelbase for the bicycle steering model, meters.
    pub wheelbase: f64,
    /// Steering angle at full steer command, radians.
    pub max_steer: f64,
    /// Free-road target speed, m/s.
    pub cruise_speed: f64,
    /// Acceleration at full throttle, m/s^2.
    pub max_accel: f64,
    /// Deceleration at full brake, m/s^2.
    pub max_brake: f64,
    /// Deceleration demand at which braking takes over from speed tracking.
    pub brake_start_decel: f64,
    /// Pure-pursuit lookahead floor, meters.
    pub lookahead_min: f64,
    /// Lookahead per unit speed, seconds.
    pub lookahead_gain: f64,
    /// Speed-tracking gain, 1/s: desired accel per m/s of speed error.
    pub speed_gain: f64,
    /// How far short of a demanded stop point to come to rest, meters.
    pub stop_margin: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        PlannerParams {
            wheelbase: 2.5,
            max_steer: 35.0_f64.to_radians(),
            cruise_speed: 8.0,
            max_accel: 3.0,
            max_brake: 6.0,
            brake_start_decel: 2.0,
            lookahead_min: 3.0,
            lookahead_gain: 0.75,
            speed_gain: 1.5,
            stop_margin: 2.0,
        }
    }
}

/// Instantaneous vehicle state on a track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoState {
    pub pos: Vec2,
    /// Heading angle, radians CCW from +x.
    pub heading: f64,
    /// Forward speed, m/s (never negative).
    pub v: f64,
    /// Arc position of the projection onto the centerline, meters.
    pub arc: f64,
}

/// Steering command from pure pursuit: aim at the centerline point one
/// lookahead ahead, offset laterally by the requested shift. Positive command
/// steers right.
fn steer_command(centerline: &Polyline, ego: &EgoState, shift: f64, p: &PlannerParams) -> f64 {
    let lookahead = p.lookahead_min.max(p.lookahead_gain * ego.v);
    let target_arc = ego.arc + lookahead;
    let base = centerline.point_at(target_arc);
    let normal = centerline.tangent_at(target_arc).left_normal();
    let target = base.add(normal.scale(shift));

    let to_target = target.sub(ego.pos);
    let d = to_target.norm();
    if d < 1e-6 {
        return 0.0;
    }
    // Heading error of the target, wrapped to [-pi, pi]; positive = target left.
    let mut alpha = to_target.angle() - ego.heading;
    while alpha > std::f64::consts::PI {
        alpha -= 2.0 * std::f64::consts::PI;
    }
    while alpha < -std::f64::consts::PI {
        alpha += 2.0 * std::f64::consts::PI;
    }
    let curvature = 2.0 * alpha.sin() / d;
    let delta = (p.wheelbase * curvature).atan().clamp(-p.max_steer, p.max_steer);
    // Positive steering angle turns left; command sign is right-positive.
    (-delta / p.max_steer).clamp(-1.0, 1.0)
}

/// Longitudinal command: track the tightest speed cap, and brake to rest
/// `stop_margin` short of the nearest demanded stop point. Returns
/// (throttle, brake), at most one nonzero.
fn longitudinal_command(ego: &EgoState, views: &[HazardView], p: &PlannerParams) -> (f64, f64) {
    let mut v_target = p.cruise_speed;
    let mut stop_dist: Option<f64> = None;
    for view in views {
        if let Some(cap) = view.speed_cap {
            v_target = v_target.min(cap.max(0.0));
        }
        if let Some(d) = view.stop_at {
            stop_dist = Some(match stop_dist {
                Some(prev) => prev.min(d),
                None => d,
            });
        }
    }

    if let Some(d) = stop_dist {
        // Already at (or overrun to) the rest point: hold the brake until the
        // stop demand is withdrawn.
        if d <= p.stop_margin + 1.0 {
            return (0.0, 1.0);
        }
        let needed = ego.v * ego.v / (2.0 * (d - p.stop_margin).max(0.1));
        if needed >= p.brake_start_decel {
            return (0.0, (needed / p.max_brake).clamp(0.0, 1.0));
        }
    }

    let desired_accel = p.speed_gain * (v_target - ego.v);
    if desired_accel >= 0.0 {
        ((desired_accel / p.max_accel).clamp(0.0, 1.0), 0.0)
    } else {
        (0.0, (-desired_accel / p.max_brake).clamp(0.0, 1.0))
    }
}

/// Full expert action for one control step.
pub fn plan(
    centerline: &Polyline,
    ego: &EgoState,
    views: &[HazardView],
    p: &PlannerParams,
) -> Action {
    let shift: f64 = views.iter().map(|v| v.shift).sum();
    let steer = steer_command(centerline, ego, shift, p);
    let (throttle, brake) = longitudinal_command(ego, views, p);
    Action::new(steer, throttle, brake).clamped()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight() -> Polyline {
        Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(200.0, 0.0)]).unwrap()
    }

    fn ego(pos: Vec2, heading: f64, v: f64, arc: f64) -> EgoState {
        EgoState { pos, heading, v, arc }
    }

    fn view(stop_at: Option<f64>, speed_cap: Option<f64>, shift: f64) -> HazardView {
        HazardView { index: 0, dist_ahead: stop_at.unwrap_or(20.0), stop_at, speed_cap, shift }
    }

    #[test]
    fn left_of_centerline_steers_right() {
        // Sign convention pin: ego displaced 0.5 m left (+y) of a straight
        // route, heading along it, must steer back with a positive command.
        let track = straight();
        let e = ego(Vec2::new(50.0, 0.5), 0.0, 8.0, 50.0);
        let a = plan(&track, &e, &[], &PlannerParams::default());
        assert!(a.steer > 0.0, "steer = {}", a.steer);

        let e = ego(Vec2::new(50.0, -0.5), 0.0, 8.0, 50.0);
        let a = plan(&track, &e, &[], &PlannerParams::default());
        assert!(a.steer < 0.0, "steer = {}", a.steer);
    }

    #[test]
    fn on_centerline_steers_straight_and_accelerates() {
        let track = straight();
        let e = ego(Vec2::new(50.0, 0.0), 0.0, 2.0, 50.0);
        let a = plan(&track, &e, &[], &PlannerParams::default());
        assert!(a.steer.abs() < 1e-9);
        assert!(a.throttle > 0.9, "throttle = {}", a.throttle);
        assert_eq!(a.brake, 0.0);
    }

    #[test]
    fn at_cruise_speed_commands_settle() {
        let track = straight();
        let e = ego(Vec2::new(50.0, 0.0), 0.0, 8.0, 50.0);
        let a = plan(&track, &e, &[], &PlannerParams::default());
        assert!(a.throttle.abs() < 1e-9);
        assert!(a.brake.abs() < 1e-9);
    }

    #[test]
    fn speed_cap_slows_the_ego() {
        let track = straight();
        let e = ego(Vec2::new(50.0, 0.0), 0.0, 8.0, 50.0);
        let a = plan(&track, &e, &[view(None, Some(4.0), 0.0)], &PlannerParams::default());
        assert_eq!(a.throttle, 0.0);
        assert!(a.brake > 0.0, "brake = {}", a.brake);
    }

    #[test]
    fn stop_demand_brakes_harder_as_it_nears() {
        let track = straight();
        let p = PlannerParams::default();
        // Far away at cruise: no braking demand yet (needed decel below start).
        let e = ego(Vec2::new(50.0, 0.0), 0.0, 8.0, 50.0);
        let far = plan(&track, &e, &[view(Some(40.0), None, 0.0)], &p);
        assert_eq!(far.brake, 0.0);
        // Close: needed decel exceeds the start threshold.
        let near = plan(&track, &e, &[view(Some(12.0), None, 0.0)], &p);
        assert!(near.brake > 0.0, "brake = {}", near.brake);
        let nearer = plan(&track, &e, &[view(Some(8.0), None, 0.0)], &p);
        assert!(nearer.brake > near.brake);
        // At the rest point, stopped: hold the brake.
        let held = plan(&track, &ego(Vec2::new(50.0, 0.0), 0.0, 0.0, 50.0), &[view(Some(2.5), None, 0.0)], &p);
        assert_eq!((held.throttle, held.brake), (0.0, 1.0));
    }

    #[test]
    fn shift_moves_the_tracking_target() {
        // A right-shift request (negative) on the centerline steers right.
        let track = straight();
        let e = ego(Vec2::new(50.0, 0.0), 0.0, 8.0, 50.0);
        let a = plan(&track, &e, &[view(None, None, -0.8)], &PlannerParams::default());
        assert!(a.steer > 0.0, "steer = {}", a.steer);
    }
}
