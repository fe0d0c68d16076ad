//! Checks shared by the focused integration tests and the acceptance report.
#![allow(dead_code)]

use evade_core::constraints::{build_fcc, build_rcc, AvoidanceSide, LeadVehicle, SafetyEnvelope};
use evade_core::geometry::{intersect_line_circle, Circle, Halfspace, Point2, Polytope};
use evade_core::models::{discrete_at, KinematicState, VehicleParams, NU, NX};
use evade_core::mpc::{MpcConfig, RobustSetup, Variant};
use evade_core::qp::{self, QpProblem, QpStatus};
use evade_core::reference_path::{build_clothoid_path, RoadPath, DEFAULT_STEP};
use evade_core::simulation::{PathSpec, Turn, KMH};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SCALE_TOL: f64 = 1.0 + 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Outcome of one check with a one-line explanation.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

// ---------------------------------------------------------------- QP oracle

pub struct OracleCase {
    pub problem: QpProblem,
    pub objective: f64,
}

/// Problems solved offline by two independent conic solvers (see `data/gen_qp_oracle.py`).
pub fn oracle_cases() -> Vec<OracleCase> {
    let text = include_str!("../data/qp_oracle.txt");
    text.split("# qp-dump v1")
        .filter(|c| !c.trim().is_empty())
        .map(|chunk| {
            let objective = chunk
                .lines()
                .find_map(|l| l.strip_prefix("# oracle "))
                .expect("oracle line")
                .trim()
                .parse()
                .expect("oracle value");
            OracleCase {
                problem: QpProblem::from_text(chunk).expect("fixture parses"),
                objective,
            }
        })
        .collect()
}

pub fn check_qp_oracle() -> Verdict {
    let cases = oracle_cases();
    let mut worst_rel = 0.0_f64;
    let mut worst_kkt = 0.0_f64;
    let mut failures = Vec::new();
    for (i, c) in cases.iter().enumerate() {
        match qp::solve(&c.problem) {
            Ok(sol) if sol.status == QpStatus::Optimal => {
                let rel = (sol.objective - c.objective).abs() / c.objective.abs().max(1.0);
                worst_rel = worst_rel.max(rel);
                worst_kkt = worst_kkt.max(sol.kkt_residual);
                if rel > 1e-6 || sol.kkt_residual >= 1e-6 {
                    failures.push(i);
                }
            }
            _ => failures.push(i),
        }
    }
    Verdict::new(
        failures.is_empty() && cases.len() == 50,
        format!(
            "{} problems, worst relative objective error {worst_rel:.1e}, worst KKT {worst_kkt:.1e}, failures {failures:?}",
            cases.len()
        ),
    )
}

// ---------------------------------------------------------------- set algebra

fn random_polytope(r: &mut ChaCha8Rng, dim: usize) -> Polytope {
    let n = r.gen_range(dim + 1..dim + 9);
    let pts: Vec<DVector<f64>> = (0..n)
        .map(|_| DVector::from_fn(dim, |_, _| r.gen_range(-3.0..3.0)))
        .collect();
    Polytope::from_vertices(pts).expect("random hull")
}

fn random_box(r: &mut ChaCha8Rng, dim: usize, max_half: f64) -> Polytope {
    let lo: Vec<f64> = (0..dim).map(|_| -r.gen_range(0.01..max_half)).collect();
    let hi: Vec<f64> = (0..dim).map(|_| r.gen_range(0.01..max_half)).collect();
    Polytope::from_box(&lo, &hi).unwrap()
}

/// `P ⊕ Q` and `Q ⊕ P` contain each other.
pub fn minkowski_commutes(p: &Polytope, q: &Polytope) -> bool {
    let a = p.minkowski_sum(q).unwrap();
    let b = q.minkowski_sum(p).unwrap();
    a.is_subset_of(&b, 1e-9).unwrap() && b.is_subset_of(&a, 1e-9).unwrap()
}

/// `(P ⊖ Q) ⊕ Q ⊆ P` whenever the difference is nonempty.
pub fn erosion_dilation_holds(p: &Polytope, q: &Polytope) -> Option<bool> {
    let eroded = p.pontryagin_diff(q).unwrap()?;
    let back = eroded.minkowski_sum(q).unwrap();
    Some(back.is_subset_of(p, 1e-9).unwrap())
}

pub fn robust_setup_60_80(cfg: &MpcConfig) -> RobustSetup {
    let mut cfg = cfg.clone();
    cfg.robust.v_range = Some((60.0 * KMH, 80.0 * KMH));
    RobustSetup::compute(&VehicleParams::default(), &cfg, 70.0 * KMH).expect("robust setup")
}

fn sub(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}

fn box_vertices(lo: &DVector<f64>, hi: &DVector<f64>) -> Vec<DVector<f64>> {
    let n = lo.len();
    (0..1usize << n)
        .map(|mask| DVector::from_fn(n, |i, _| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }))
        .collect()
}

/// `A_K z + w ∈ (1 + 1e-6) Z` for every vertex `z` of `Z` and every vertex `w` of `W`,
/// block by block. Returns (pairs checked, failures).
pub fn mrpi_vertex_pairs(setup: &RobustSetup) -> (usize, usize) {
    let a_k = &setup.lpv.a_bar + &setup.lpv.b_bar * &setup.k;
    let (w_lo, w_hi) = setup.w.bounding_box().unwrap();
    let (mut checked, mut failed) = (0, 0);
    for (idx, z) in setup.tube.blocks() {
        let m = idx.len();
        let a_blk = DMatrix::from_fn(m, m, |i, j| a_k[(idx[i], idx[j])]);
        let w_verts = box_vertices(&sub(&w_lo, idx), &sub(&w_hi, idx));
        for v in z.vertices().unwrap() {
            let image = &a_blk * v;
            for w in &w_verts {
                checked += 1;
                if !z.contains_scaled(&(&image + w), SCALE_TOL).unwrap() {
                    failed += 1;
                }
            }
        }
    }
    (checked, failed)
}

pub fn strict_shrink(setup: &RobustSetup) -> bool {
    let s = (0..NX).all(|i| {
        setup.tight_state.lo[i] > setup.state_bounds.lo[i]
            && setup.tight_state.hi[i] < setup.state_bounds.hi[i]
            && setup.tight_state.lo[i] < setup.tight_state.hi[i]
    });
    let u = (0..NU).all(|j| {
        setup.tight_input.lo[j] > setup.input_bounds.lo[j]
            && setup.tight_input.hi[j] < setup.input_bounds.hi[j]
            && setup.tight_input.lo[j] < setup.tight_input.hi[j]
    });
    s && u
}

pub fn check_set_algebra(seed: u64) -> Verdict {
    let mut r = rng(seed);
    let setup = robust_setup_60_80(&MpcConfig::with_variant(Variant::Robust));
    let (pairs, pair_fail) = mrpi_vertex_pairs(&setup);
    let shrink = strict_shrink(&setup);

    let (mut ed_n, mut ed_fail, mut mc_n, mut mc_fail) = (0, 0, 0, 0);
    for i in 0..200 {
        let dim = 2 + i % 2;
        let p = random_polytope(&mut r, dim);
        let q = if i % 3 == 0 { random_polytope(&mut r, dim).scaled(0.2).unwrap() } else { random_box(&mut r, dim, 0.5) };
        mc_n += 1;
        if !minkowski_commutes(&p, &q) {
            mc_fail += 1;
        }
        if let Some(ok) = erosion_dilation_holds(&p, &q) {
            ed_n += 1;
            if !ok {
                ed_fail += 1;
            }
        }
    }
    Verdict::new(
        pair_fail == 0 && ed_fail == 0 && mc_fail == 0 && shrink && ed_n > 0,
        format!(
            "mRPI vertex pairs {}/{pairs}, erosion-dilation {}/{ed_n}, Minkowski commutativity {}/{mc_n}, strict shrink {shrink} (tight delta [{:.3}, {:.3}], tight a_x [{:.2}, {:.2}])",
            pairs - pair_fail,
            ed_n - ed_fail,
            mc_n - mc_fail,
            setup.tight_input.lo[0],
            setup.tight_input.hi[0],
            setup.tight_input.lo[1],
            setup.tight_input.hi[1],
        ),
    )
}

// ---------------------------------------------------------------- tube rollouts

/// Vertex-switching rollouts of the true LPV system under `u = ū + K e`, with an extra
/// disturbance drawn from the mismatch floor. The nominal follows `(Ā, B̄)` with inputs in
/// the tightened set; a rollout ends early once the nominal would leave the tightened state box.
/// Returns (rollouts, steps checked, steps outside (1+1e-6) Z).
pub fn tube_rollouts(setup: &RobustSetup, floor: &[f64; NX], n: usize, steps: usize, seed: u64) -> (usize, usize, usize) {
    let mut r = rng(seed);
    let lpv = &setup.lpv;
    let verts = [
        discrete_at(&VehicleParams::default(), lpv.v_range.0, lpv.t_s).unwrap(),
        discrete_at(&VehicleParams::default(), lpv.v_range.1, lpv.t_s).unwrap(),
    ];
    let ts = &setup.tight_state;
    let ti = &setup.tight_input;
    let (mut checked, mut outside) = (0, 0);
    for run in 0..n {
        let mut z = DVector::from_vec(vec![
            ts.lo[0] + 5.0,
            r.gen_range(-1.0..1.0),
            r.gen_range(lpv.v_range.0..lpv.v_range.1),
            r.gen_range(-0.05..0.05),
        ]);
        // half the rollouts start on the boundary of Z
        let mut e = if run % 2 == 0 {
            DVector::zeros(NX)
        } else {
            let d = DVector::from_fn(NX, |_, _| r.gen_range(-1.0..1.0));
            let mut p = DVector::zeros(NX);
            for (idx, blk) in setup.tube.blocks() {
                let sp = blk.support_point(&sub(&d, idx)).unwrap();
                for (k, &i) in idx.iter().enumerate() {
                    p[i] = sp[k];
                }
            }
            p
        };
        for _ in 0..steps {
            // steer the nominal heading back towards zero so it stays in the box
            let delta = (-0.5 * z[3] + r.gen_range(-0.5..0.5) * ti.hi[0]).clamp(ti.lo[0], ti.hi[0]);
            let ax = r.gen_range(ti.lo[1]..ti.hi[1]) * 0.3;
            let u_bar = DVector::from_vec(vec![delta, ax]);
            let x = &z + &e;
            let u = &u_bar + &setup.k * &e;
            let m = &verts[r.gen_range(0..2)];
            let w_extra = DVector::from_fn(NX, |i, _| r.gen_range(-floor[i]..=floor[i]));
            let x_next = &m.a * &x + &m.b * &u + w_extra;
            let z_next = &lpv.a_bar * &z + &lpv.b_bar * &u_bar;
            if (0..NX).any(|i| z_next[i] < ts.lo[i] || z_next[i] > ts.hi[i]) {
                break;
            }
            z = z_next;
            e = x_next - &z;
            checked += 1;
            if !setup.tube.contains_scaled(&e, SCALE_TOL) {
                outside += 1;
            }
        }
    }
    (n, checked, outside)
}

pub fn check_tube_containment(seed: u64) -> Verdict {
    let cfg = MpcConfig::with_variant(Variant::Robust);
    let setup = RobustSetup::compute(&VehicleParams::default(), &cfg, 80.0 * KMH).expect("robust setup");
    let (n, checked, outside) = tube_rollouts(&setup, &cfg.robust.mismatch_floor, 100, 60, seed);
    Verdict::new(
        outside == 0 && checked >= n * 20,
        format!("{n} rollouts, {checked} steps, {outside} outside (1+1e-6)Z; s={}, alpha={:.1e}", setup.tube.s, setup.tube.alpha),
    )
}

// ---------------------------------------------------------------- constraint geometry

pub fn scenario_path(radius: Option<f64>) -> RoadPath {
    let spec = match radius {
        None => PathSpec::Straight,
        Some(radius) => PathSpec::Arc {
            radius,
            turn: Turn::Right,
        },
    };
    build_clothoid_path(spec.profile().unwrap(), 600.0, DEFAULT_STEP, 5.0).unwrap()
}

/// Analytic circle–line intersection for the line `p + t d` (|d| = 1).
pub fn analytic_intersections(p: Point2, d: Point2, c: Point2, radius: f64) -> Vec<Point2> {
    let f = p - c;
    let b = f.dot(&d);
    let disc = b * b - (f.dot(&f) - radius * radius);
    if disc < 0.0 {
        return Vec::new();
    }
    let s = disc.sqrt();
    vec![p + (-b - s) * d, p + (-b + s) * d]
}

pub fn max_intersection_error(r: &mut ChaCha8Rng, n: usize) -> f64 {
    let mut worst = 0.0_f64;
    for _ in 0..n {
        let c = Point2::new(r.gen_range(-500.0..500.0), r.gen_range(-500.0..500.0));
        let radius = r.gen_range(0.5..40.0);
        let th = r.gen_range(-3.2..3.2);
        let d = Point2::new(f64::cos(th), f64::sin(th));
        // foot of the line strictly inside the circle
        let off = r.gen_range(-0.95..0.95) * radius;
        let p = c + off * Point2::new(-d.y, d.x) + r.gen_range(-50.0..50.0) * d;
        let line = Halfspace::through_point_with_heading(p, th, evade_core::Sense::Le).unwrap();
        let got = intersect_line_circle(&line, &Circle::new(c, radius).unwrap());
        let want = analytic_intersections(p, d, c, radius);
        assert_eq!(got.len(), 2);
        for w in &want {
            let e = got.iter().map(|g| (g - w).norm()).fold(f64::INFINITY, f64::min);
            worst = worst.max(e);
        }
    }
    worst
}

#[derive(Debug, Default, Clone, Copy)]
pub struct GeometryTally {
    pub poses: usize,
    pub corners_unsafe: usize,
    pub subject_safe: usize,
    pub point_error: f64,
}

/// Random lead poses along the lane, aligned with the road; the subject drives on the lead's
/// lane line at an arc gap of 1–25 m beyond `L_x + l_r` (behind for FCC, ahead for RCC).
pub fn collision_geometry(path: &RoadPath, r: &mut ChaCha8Rng, n: usize) -> GeometryTally {
    let env = SafetyEnvelope::default();
    let mut t = GeometryTally::default();
    for i in 0..n {
        let forward = i % 2 == 0;
        let s_lead = r.gen_range(150.0..450.0);
        let pose = path.pose_at(s_lead);
        let e_y = r.gen_range(-0.5..0.5);
        let lead = LeadVehicle::new(path.offset_point(s_lead, e_y), pose.psi, r.gen_range(0.0..10.0));
        let v = r.gen_range(60.0..80.0) * KMH;
        let r3 = env.l_x(v) + lead.l_r;
        let gap = r3 + r.gen_range(1.0..25.0);
        let s_sub = if forward { s_lead - gap } else { s_lead + gap };
        let sp = path.pose_at(s_sub);
        let pos = path.offset_point(s_sub, e_y);
        let subject = KinematicState::new(pos.x, pos.y, v, sp.psi);
        let (hs, pts) = if forward {
            build_fcc(&lead, &env, &subject, AvoidanceSide::Left).unwrap()
        } else {
            build_rcc(&lead, &env, &subject, AvoidanceSide::Left).unwrap()
        };
        let axis = lead.axis();
        let p3 = lead.pos + if forward { -r3 } else { r3 } * axis;
        let p4 = lead.pos + env.w * lead.lateral();
        t.point_error = t.point_error.max((pts.p3 - p3).norm()).max((pts.p4 - p4).norm());
        t.poses += 1;
        if lead.corners().iter().all(|c| !hs.contains(c)) {
            t.corners_unsafe += 1;
        }
        if hs.strictly_contains(&Point2::new(subject.x, subject.y)) {
            t.subject_safe += 1;
        }
    }
    t
}

pub fn check_constraint_geometry(seed: u64) -> Verdict {
    let mut r = rng(seed);
    let mut parts = Vec::new();
    let mut pass = true;
    let mut worst_point = 0.0_f64;
    for radius in [None, Some(500.0), Some(750.0)] {
        let path = scenario_path(radius);
        let t = collision_geometry(&path, &mut r, 1000);
        worst_point = worst_point.max(t.point_error);
        pass &= t.corners_unsafe == t.poses && t.subject_safe == t.poses;
        parts.push(format!(
            "{}: corners unsafe {}/{}, subject safe {}/{}",
            radius.map_or("straight".to_string(), |v| format!("R={v}")),
            t.corners_unsafe,
            t.poses,
            t.subject_safe,
            t.poses
        ));
    }
    let circle_err = max_intersection_error(&mut r, 1000);
    let err = circle_err.max(worst_point);
    pass &= err <= 1e-9;
    parts.push(format!("intersection error {err:.1e} m"));
    Verdict::new(pass, parts.join("; "))
}
