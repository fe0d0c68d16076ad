mod common;

use evade_core::constraints::{build_fcc, build_rcc, AvoidanceSide, LeadVehicle, SafetyEnvelope};
use evade_core::geometry::{intersect_line_circle, Circle, Halfspace, Point2};
use evade_core::models::KinematicState;
use evade_core::Sense;
use proptest::prelude::*;

fn reference_lead() -> LeadVehicle {
    LeadVehicle::new(Point2::new(100.0, 0.0), 0.0, 0.0)
}

/// `L_x + l_r = 20` at this speed with `t = 1 s`, `L_c = 3.2 m`, `l_r = 1.7 m`.
const SPEED_FOR_R3_20: f64 = 20.0 - 3.2 - 1.7;

fn envelope() -> SafetyEnvelope {
    SafetyEnvelope { time_gap: 1.0, l_c: 3.2, w: 3.0 }
}

#[test]
fn forward_constraint_reference_configuration() {
    let subject = KinematicState::new(60.0, 0.0, SPEED_FOR_R3_20, 0.0);
    let (hs, pts) = build_fcc(&reference_lead(), &envelope(), &subject, AvoidanceSide::Left).unwrap();
    assert!((pts.p3 - Point2::new(80.0, 0.0)).norm() < 1e-12);
    assert!((pts.p4 - Point2::new(100.0, 3.0)).norm() < 1e-12);
    // safe iff −0.15 x + y + 12 > 0, scaled to unit normal
    let n = f64::hypot(0.15, 1.0);
    let oracle = |p: Point2| (-0.15 * p.x + p.y + 12.0) / n;
    for p in [Point2::new(60.0, 0.0), Point2::new(100.0, 0.0), Point2::new(90.0, 5.0), Point2::new(70.0, -2.0)] {
        assert!((hs.margin(&p) - oracle(p)).abs() < 1e-9, "{p:?}");
    }
    assert!((hs.margin(&Point2::new(60.0, 0.0)) - 3.0 / n).abs() < 1e-12);
    assert!((hs.margin(&Point2::new(100.0, 0.0)) + 3.0 / n).abs() < 1e-12);
}

#[test]
fn rear_constraint_mirrors_forward() {
    let subject = KinematicState::new(140.0, 4.0, SPEED_FOR_R3_20, 0.0);
    let (hs, pts) = build_rcc(&reference_lead(), &envelope(), &subject, AvoidanceSide::Left).unwrap();
    assert!((pts.p3 - Point2::new(120.0, 0.0)).norm() < 1e-12);
    assert!((pts.p4 - Point2::new(100.0, 3.0)).norm() < 1e-12);
    assert!(hs.strictly_contains(&Point2::new(140.0, 0.0)));
    assert!(hs.strictly_contains(&Point2::new(105.0, 4.0)));
    assert!(!hs.contains(&Point2::new(100.0, 0.0)));
}

#[test]
fn subject_on_the_line_has_zero_margin() {
    let subject = KinematicState::new(80.0, 0.0, SPEED_FOR_R3_20, 0.0);
    let (hs, _) = build_fcc(&reference_lead(), &envelope(), &subject, AvoidanceSide::Left).unwrap();
    assert!(hs.margin(&Point2::new(80.0, 0.0)).abs() < 1e-12);
}

#[test]
fn doubling_speed_moves_p3_back_by_v_t() {
    let lead = reference_lead();
    let v = 12.0;
    let at = |v: f64| build_fcc(&lead, &envelope(), &KinematicState::new(0.0, 0.0, v, 0.0), AvoidanceSide::Left).unwrap().1.p3;
    assert!(((at(v) - at(2.0 * v)).x - v).abs() < 1e-12);
}

#[test]
fn straight_road_poses() {
    let mut r = common::rng(3);
    let t = common::collision_geometry(&common::scenario_path(None), &mut r, 1000);
    assert_eq!(t.corners_unsafe, t.poses);
    assert_eq!(t.subject_safe, t.poses);
    assert!(t.point_error < 1e-9);
}

#[test]
fn curved_road_poses_keep_the_lead_unsafe() {
    // the subject-side check on curves is reported by the acceptance run
    let mut r = common::rng(5);
    for radius in [500.0, 750.0] {
        let t = common::collision_geometry(&common::scenario_path(Some(radius)), &mut r, 1000);
        assert_eq!(t.corners_unsafe, t.poses, "R={radius}");
        assert!(t.point_error < 1e-9);
    }
}

#[test]
fn circle_line_intersections_match_analytic_roots() {
    let mut r = common::rng(9);
    assert!(common::max_intersection_error(&mut r, 1000) < 1e-9);
}

proptest! {
    #[test]
    fn intersections_lie_on_both_curves(
        cx in -100.0..100.0f64, cy in -100.0..100.0f64, radius in 0.1..50.0f64,
        th in -3.2..3.2f64, off in -0.99..0.99f64,
    ) {
        let c = Point2::new(cx, cy);
        let n = Point2::new(-th.sin(), th.cos());
        let line = Halfspace::through_point_with_heading(c + off * radius * n, th, Sense::Le).unwrap();
        let pts = intersect_line_circle(&line, &Circle::new(c, radius).unwrap());
        prop_assert_eq!(pts.len(), 2);
        for p in pts {
            prop_assert!(((p - c).norm() - radius).abs() < 1e-9);
            prop_assert!(line.margin(&p).abs() < 1e-9);
        }
    }

    #[test]
    fn lead_corners_unsafe_for_any_heading(
        psi in -3.2..3.2f64, v in 0.0..40.0f64, w in 1.8..4.0f64, forward in any::<bool>(),
    ) {
        let lead = LeadVehicle::new(Point2::new(10.0, -3.0), psi, 0.0);
        let env = SafetyEnvelope { w, ..SafetyEnvelope::default() };
        let subject = KinematicState::new(0.0, 0.0, v, 0.0);
        let (hs, _) = if forward {
            build_fcc(&lead, &env, &subject, AvoidanceSide::Left).unwrap()
        } else {
            build_rcc(&lead, &env, &subject, AvoidanceSide::Left).unwrap()
        };
        for c in lead.corners() {
            prop_assert!(!hs.contains(&c));
        }
    }
}
