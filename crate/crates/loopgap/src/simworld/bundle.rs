//! The bundled study world: six fixed routes with scripted hazards and a
//! 24-policy corruption grid (noise level x hazard-miss rate x uncertainty
//! calibration). Centerline points are put on the canonical float grid at
//! construction, so a track reloaded from disk is bit-identical to the one
//! built here.

use crate::numeric::canon;
use crate::simworld::geometry::{Polyline, RouteBuilder, Vec2};
use crate::simworld::policy::PolicySpec;
use crate::simworld::track::{Hazard, Track};

/// Sample spacing along built centerlines, meters.
const ROUTE_STEP: f64 = 2.0;

fn gridded(route: Polyline) -> Polyline {
    let points: Vec<Vec2> =
        route.points().iter().map(|p| Vec2::new(canon(p.x), canon(p.y))).collect();
    Polyline::new(points).expect("gridded route stays valid")
}

fn track(track_id: &str, route: Polyline, hazards: Vec<Hazard>) -> Track {
    let t = Track {
        track_id: track_id.to_string(),
        centerline: gridded(route),
        lane_half_width: 2.0,
        speed_limit: 10.0,
        hazards,
    };
    t.validate().expect("bundled track is valid");
    t
}

/// The six bundled routes. Static obstructions and crossings sit on straight
/// sections; anchors keep >= 60 m of spacing and >= 30 m from either end.
pub fn bundled_tracks() -> Vec<Track> {
    let deg = std::f64::consts::PI / 180.0;
    vec![
        track(
            "t0",
            RouteBuilder::new(Vec2::new(0.0, 0.0), 0.0, ROUTE_STEP)
                .straight(260.0)
                .arc(40.0, 90.0 * deg)
                .straight(160.0)
                .arc(40.0, -90.0 * deg)
                .straight(120.0)
                .build()
                .expect("t0 route"),
            vec![
                Hazard::LeadVehicle { arc0: 60.0, speed: 4.0, active_length: 200.0 },
                Hazard::StopLine { arc: 340.0, period: 24.0, red_fraction: 0.35, offset: 5.0 },
                Hazard::StaticObstacle { arc: 430.0, lat_offset: 0.9, radius: 0.6 },
                Hazard::CrossingAgent { arc: 560.0, trigger_distance: 25.0, crossing_speed: 1.5 },
            ],
        ),
        track(
            "t1",
            RouteBuilder::new(Vec2::new(0.0, 0.0), 0.0, ROUTE_STEP)
                .straight(120.0)
                .arc(50.0, -60.0 * deg)
                .straight(180.0)
                .arc(50.0, 60.0 * deg)
                .straight(160.0)
                .build()
                .expect("t1 route"),
            vec![
                Hazard::CrossingAgent { arc: 80.0, trigger_distance: 25.0, crossing_speed: 1.5 },
                Hazard::StaticObstacle { arc: 230.0, lat_offset: 0.9, radius: 0.6 },
                Hazard::StopLine { arc: 320.0, period: 28.0, red_fraction: 0.4, offset: 12.0 },
                Hazard::CrossingAgent { arc: 450.0, trigger_distance: 25.0, crossing_speed: 1.5 },
            ],
        ),
        track(
            "t2",
            RouteBuilder::new(Vec2::new(0.0, 0.0), 0.0, ROUTE_STEP)
                .straight(140.0)
                .arc(45.0, 90.0 * deg)
                .straight(60.0)
                .arc(45.0, 90.0 * deg)
                .straight(200.0)
                .build()
                .expect("t2 route"),
            vec![
                Hazard::LeadVehicle { arc0: 50.0, speed: 4.0, active_length: 150.0 },
                Hazard::StopLine { arc: 300.0, period: 22.0, red_fraction: 0.45, offset: 0.0 },
                Hazard::StaticObstacle { arc: 400.0, lat_offset: 0.9, radius: 0.6 },
                Hazard::CrossingAgent { arc: 480.0, trigger_distance: 25.0, crossing_speed: 1.5 },
            ],
        ),
        track(
            "t3",
            RouteBuilder::new(Vec2::new(0.0, 0.0), 0.0, ROUTE_STEP)
                .straight(100.0)
                .arc(35.0, -75.0 * deg)
                .straight(120.0)
                .arc(35.0, 75.0 * deg)
                .straight(140.0)
                .arc(60.0, 45.0 * deg)
                .straight(80.0)
                .build()
                .expect("t3 route"),
            vec![
                Hazard::StopLine { arc: 70.0, period: 26.0, red_fraction: 0.4, offset: 14.0 },
                Hazard::StaticObstacle { arc: 190.0, lat_offset: 0.9, radius: 0.6 },
                Hazard::CrossingAgent { arc: 320.0, trigger_distance: 25.0, crossing_speed: 1.5 },
                Hazard::StopLine { arc: 420.0, period: 24.0, red_fraction: 0.35, offset: 3.0 },
            ],
        ),
        track(
            "t4",
            RouteBuilder::new(Vec2::new(0.0, 0.0), 0.0, ROUTE_STEP)
                .straight(220.0)
                .arc(30.0, -90.0 * deg)
                .straight(100.0)
                .arc(30.0, -45.0 * deg)
                .straight(160.0)
                .build()
                .expect("t4 route"),
            vec![
                Hazard::LeadVehicle { arc0: 70.0, speed: 4.0, active_length: 130.0 },
                Hazard::CrossingAgent { arc: 280.0, trigger_distance: 25.0, crossing_speed: 1.5 },
                Hazard::StaticObstacle { arc: 450.0, lat_offset: 0.9, radius: 0.6 },
            ],
        ),
        track(
            "t5",
            RouteBuilder::new(Vec2::new(0.0, 0.0), 0.0, ROUTE_STEP)
                .straight(180.0)
                .arc(55.0, 80.0 * deg)
                .straight(200.0)
                .arc(55.0, -80.0 * deg)
                .straight(120.0)
                .build()
                .expect("t5 route"),
            vec![
                Hazard::StopLine { arc: 120.0, period: 30.0, red_fraction: 0.4, offset: 22.0 },
                Hazard::StaticObstacle { arc: 300.0, lat_offset: 0.9, radius: 0.6 },
                Hazard::CrossingAgent { arc: 380.0, trigger_distance: 25.0, crossing_speed: 1.5 },
                Hazard::StopLine { arc: 520.0, period: 26.0, red_fraction: 0.45, offset: 9.0 },
            ],
        ),
    ]
}

/// The bundled policy grid: every combination of noise level, miss rate, and
/// calibration flag, each reporting `k` action samples.
pub fn bundled_family(k: usize) -> Vec<PolicySpec> {
    let noises = [0.02, 0.05, 0.1, 0.2];
    let misses = [0.0, 0.3, 0.7];
    let mut specs = Vec::new();
    for &noise in &noises {
        for &miss_rate in &misses {
            for &calibrated in &[true, false] {
                let tag = if calibrated { "cal" } else { "unc" };
                specs.push(PolicySpec {
                    policy_id: format!("n{noise}_m{miss_rate}_{tag}"),
                    noise,
                    miss_rate,
                    calibrated,
                    zone_noise_mult: 3.0,
                    bias: 0.0,
                    k,
                });
            }
        }
    }
    specs
}
