//! Closed loop: path projection, region construction, planning, torque vectoring and
//! plant integration at the planner sampling rate, plus run metrics and sweeps.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{
    rectangle, AvoidanceSide, ConvexRegion, LeadVehicle, Mode, ModeSelector, RegionBuilder, RoadEdges,
    SafetyEnvelope,
};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::models::ControlInput;
use crate::mpc::{wrap_angle, MpcConfig, PlanContext, Planner, Variant};
use crate::plant::{Plant, PlantParams, PlantState, Surface};
use crate::qp::QpStatus;
use crate::reference_path::{build_clothoid_path, CurvatureProfile, RoadPath, DEFAULT_STEP};
use crate::torque_vectoring::{TorqueCommand, TorqueVectoring, TvConfig, TvInput};

pub const KMH: f64 = 1.0 / 3.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Turn {
    Left,
    Right,
}

impl Turn {
    pub fn sign(self) -> f64 {
        match self {
            Turn::Left => 1.0,
            Turn::Right => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Turn::Left => "left",
            Turn::Right => "right",
        }
    }
}

/// Centreline geometry of the subject's lane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PathSpec {
    Straight,
    Arc { radius: f64, turn: Turn },
    /// Piecewise-linear curvature breakpoints `(s, κ)`.
    Profile(Vec<(f64, f64)>),
}

impl PathSpec {
    pub fn profile(&self) -> Result<CurvatureProfile> {
        Ok(match self {
            PathSpec::Straight => CurvatureProfile::constant(0.0)?,
            PathSpec::Arc { radius, turn } => {
                if !(*radius > 0.0) {
                    return Err(Error::Scenario(format!("road radius must be positive, got {radius}")));
                }
                CurvatureProfile::constant(turn.sign() / radius)?
            }
            PathSpec::Profile(bp) => CurvatureProfile::new(bp.clone())?,
        })
    }
}

/// Lead vehicle placed on the path at `s` ahead of the subject's start, moving along it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadSpec {
    pub s: f64,
    pub e_y: f64,
    pub speed_kmh: f64,
}

impl Default for LeadSpec {
    fn default() -> Self {
        Self {
            s: 50.0,
            e_y: 0.0,
            speed_kmh: 0.0,
        }
    }
}

/// Subject body extents measured from the CG, used for separation checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub front: f64,
    pub rear: f64,
}

impl Default for Footprint {
    fn default() -> Self {
        Self { front: 2.33, rear: 2.11 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub path: PathSpec,
    pub road_length: f64,
    pub speed_kmh: f64,
    pub lead: Option<LeadSpec>,
    pub mu: f64,
    pub mpc: MpcConfig,
    pub tv_enabled: bool,
    pub tv: TvConfig,
    pub plant: PlantParams,
    pub envelope: SafetyEnvelope,
    pub edges: RoadEdges,
    pub side: AvoidanceSide,
    pub footprint: Footprint,
    pub return_threshold: f64,
    pub duration: f64,
    pub seed: u64,
    /// Amplitude of a seeded uniform perturbation of the initial lateral offset.
    pub initial_offset_noise: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "default".into(),
            path: PathSpec::Arc {
                radius: 750.0,
                turn: Turn::Right,
            },
            road_length: 600.0,
            speed_kmh: 80.0,
            lead: Some(LeadSpec::default()),
            mu: 1.0,
            mpc: MpcConfig::default(),
            tv_enabled: true,
            tv: TvConfig::default(),
            plant: PlantParams::default(),
            envelope: SafetyEnvelope::default(),
            edges: RoadEdges::default(),
            side: AvoidanceSide::Left,
            footprint: Footprint::default(),
            return_threshold: 0.2,
            duration: 15.0,
            seed: 0,
            initial_offset_noise: 0.0,
        }
    }
}

impl Scenario {
    /// Curved-road manoeuvre at `speed_kmh` on a right-hand curve of `radius` m.
    pub fn curved(radius: f64, speed_kmh: f64, mu: f64, variant: Variant) -> Self {
        let mut s = Self {
            path: PathSpec::Arc {
                radius,
                turn: Turn::Right,
            },
            speed_kmh,
            mu,
            mpc: MpcConfig::with_variant(variant),
            ..Self::default()
        };
        s.name = format!("{}-R{radius}-{speed_kmh}kmh-mu{mu}", variant.as_str());
        s
    }

    pub fn variant(&self) -> Variant {
        self.mpc.variant
    }

    pub fn v0(&self) -> f64 {
        self.speed_kmh * KMH
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        if !(self.speed_kmh > 0.0 && self.speed_kmh <= 250.0) {
            return bad(format!("speed {} km/h outside (0, 250]", self.speed_kmh));
        }
        if !(self.mu > 0.0 && self.mu <= 1.2) {
            return bad(format!("friction coefficient {} outside (0, 1.2]", self.mu));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration {} must be positive", self.duration));
        }
        if !(self.road_length > 0.0 && self.road_length.is_finite()) {
            return bad(format!("road length {} must be positive", self.road_length));
        }
        if !(self.return_threshold > 0.0) {
            return bad(format!("return threshold {} must be positive", self.return_threshold));
        }
        if !(self.initial_offset_noise >= 0.0) {
            return bad("initial offset noise must be nonnegative".into());
        }
        if !(self.footprint.front > 0.0 && self.footprint.rear > 0.0) {
            return bad("footprint extents must be positive".into());
        }
        if let Some(l) = &self.lead {
            if !(l.s > 0.0 && l.s < self.road_length) {
                return bad(format!("lead position {} m outside the road (0, {})", l.s, self.road_length));
            }
            if !(l.speed_kmh >= 0.0) || !l.e_y.is_finite() {
                return bad("lead speed must be nonnegative and offset finite".into());
            }
        }
        self.path.profile()?;
        self.plant.vehicle.validate()?;
        if !(self.plant.wheel_inertia > 0.0) {
            return bad("wheel inertia must be positive".into());
        }
        self.envelope.validate()?;
        self.edges.validate()?;
        self.mpc.validate()?;
        Ok(())
    }

    pub fn build_path(&self) -> Result<RoadPath> {
        Ok(build_clothoid_path(
            self.path.profile()?,
            self.road_length,
            DEFAULT_STEP,
            self.plant.vehicle.lane_width,
        )?)
    }

    fn lead_at(&self, path: &RoadPath, t: f64) -> Option<(LeadVehicle, f64)> {
        self.lead.map(|l| {
            let s = (l.s + l.speed_kmh * KMH * t).min(path.total_length);
            let pose = path.pose_at(s);
            let pos = path.offset_point(s, l.e_y);
            (LeadVehicle::new(pos, pose.psi, l.speed_kmh * KMH), s)
        })
    }
}

/// One sampling instant of the closed loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub plant: PlantState,
    pub s: f64,
    pub e_y: f64,
    pub e_psi: f64,
    pub kappa: f64,
    pub mode: Mode,
    pub region: ConvexRegion,
    pub input: ControlInput,
    pub v_star: f64,
    pub status: QpStatus,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub objective: f64,
    pub slack_used: bool,
    pub tube_reset: bool,
    pub torque: TorqueCommand,
    pub yaw_moment: f64,
    /// Desired CG forces `(F_x, F_y, G_z)`; zero without torque vectoring.
    pub force_target: [f64; 3],
    pub force_measured: [f64; 3],
    pub allocation_residual: f64,
    pub lead: Option<(f64, f64, f64)>,
    pub separation: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub iaca_delta: f64,
    pub iaca_ax: f64,
    pub iaca_mz: f64,
    pub max_e_y: f64,
    pub max_e_psi: f64,
    /// `None` without a lead vehicle.
    pub min_separation: Option<f64>,
    pub collision: bool,
    pub boundary_violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub scenario: String,
    pub variant: Variant,
    pub t_s: f64,
    pub rows: Vec<TraceRow>,
    pub metrics: Metrics,
    /// Manoeuvre span used for the effort integrals.
    pub window: Option<(f64, f64)>,
    pub manoeuvre_complete: bool,
    pub abort: Option<String>,
}

impl SimTrace {
    pub fn max_kkt_residual(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.status == QpStatus::Optimal)
            .map(|r| r.kkt_residual)
            .fold(0.0, f64::max)
    }
}

/// Time-normalised trapezoidal integral of `|signal|` over the samples in `[t_in, t_fin]`.
pub fn compute_iaca(times: &[f64], values: &[f64], t_in: f64, t_fin: f64) -> Result<f64> {
    let empty = || Error::EmptyWindow { t_in, t_fin };
    if times.len() != values.len() {
        return Err(Error::Scenario(format!(
            "signal has {} times and {} values",
            times.len(),
            values.len()
        )));
    }
    if !(t_fin > t_in) {
        return Err(empty());
    }
    let tol = 1e-9 * (1.0 + t_fin.abs());
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= t_in - tol && **t <= t_fin + tol)
        .map(|(t, v)| (*t, v.abs()))
        .collect();
    if pts.len() < 2 {
        return Err(empty());
    }
    let area: f64 = pts.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum();
    let span = pts[pts.len() - 1].0 - pts[0].0;
    if !(span > 0.0) {
        return Err(empty());
    }
    Ok(area / span)
}

fn project_axis(poly: &[Point2; 4], axis: &Point2) -> (f64, f64) {
    poly.iter()
        .map(|p| p.dot(axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn point_segment_distance(p: &Point2, a: &Point2, b: &Point2) -> f64 {
    let ab = b - a;
    let l2 = ab.norm_squared();
    let t = if l2 > 0.0 { ((p - a).dot(&ab) / l2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + t * ab)).norm()
}

/// Euclidean distance between two convex quadrilaterals; zero when they overlap.
pub fn rectangle_separation(a: &[Point2; 4], b: &[Point2; 4]) -> f64 {
    let overlap = [a, b].iter().all(|poly| {
        (0..4).all(|i| {
            let e = poly[(i + 1) % 4] - poly[i];
            let axis = Point2::new(-e.y, e.x);
            let (a0, a1) = project_axis(a, &axis);
            let (b0, b1) = project_axis(b, &axis);
            a1 >= b0 && b1 >= a0
        })
    });
    if overlap {
        return 0.0;
    }
    let mut d = f64::INFINITY;
    for (p, q) in [(a, b), (b, a)] {
        for v in p.iter() {
            for i in 0..4 {
                d = d.min(point_segment_distance(v, &q[i], &q[(i + 1) % 4]));
            }
        }
    }
    d
}

/// Run the closed loop. Setup errors are returned; failures during the run truncate the
/// trace and are reported in [`SimTrace::abort`].
pub fn run(sc: &Scenario) -> Result<SimTrace> {
    sc.validate()?;
    let path = sc.build_path()?;
    let params = sc.plant.vehicle;
    let t_s = params.t_s;
    let v0 = sc.v0();
    let surface = Surface::new(sc.mu)?;
    let plant = Plant::new(sc.plant, surface);
    let mut planner = Planner::new(sc.mpc.clone(), params, v0)?;
    let mut tv = TorqueVectoring::new(sc.tv, params);
    tv.prime([0.0; 4]);
    let builder = RegionBuilder {
        edges: sc.edges,
        envelope: sc.envelope,
        side: sc.side,
    };
    let mut selector = ModeSelector::new(sc.return_threshold);

    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let e0 = if sc.initial_offset_noise > 0.0 {
        rng.gen_range(-sc.initial_offset_noise..=sc.initial_offset_noise)
    } else {
        0.0
    };
    let start = path.pose_at(0.0);
    let p0 = path.offset_point(0.0, e0);
    let mut state = PlantState::rolling(p0.x, p0.y, start.psi, v0, &sc.plant);
    state.r = v0 * start.kappa;

    let n_steps = (sc.duration / t_s).round() as usize;
    let mut rows: Vec<TraceRow> = Vec::with_capacity(n_steps + 1);
    let mut abort = None;
    let mut s_hint = 0.0;
    let mut delta_prev = params.wheelbase() * start.kappa;

    for k in 0..=n_steps {
        let t = k as f64 * t_s;
        let meas = plant.measure(&state, delta_prev);
        let pos = Point2::new(state.x, state.y);
        let proj = match path.project_near(&pos, s_hint, 20.0) {
            Ok(p) => p,
            Err(e) => {
                abort = Some(format!("t = {t:.2} s: projection failed: {e}"));
                break;
            }
        };
        if proj.s >= path.total_length - 1.0 {
            abort = Some(format!("t = {t:.2} s: reached the end of the road"));
            break;
        }
        let lead = sc.lead_at(&path, t);
        let mode = match &lead {
            Some((_, s_lead)) => selector.select(
                proj.s,
                *s_lead,
                proj.e_y,
                sc.envelope.l_x(meas.kinematic.v_x),
            ),
            None => Mode::None,
        };
        let region = match builder.build(&path, &meas.kinematic, &proj, lead.as_ref().map(|l| &l.0), mode) {
            Ok(r) => r,
            Err(e) => {
                abort = Some(format!("t = {t:.2} s: constraint construction failed: {e}"));
                break;
            }
        };
        let out = match planner.plan(&PlanContext {
            state: &meas.kinematic,
            path: &path,
            proj: &proj,
            region: &region,
            v_ref: v0,
            s_ref: None,
        }) {
            Ok(o) => o,
            Err(e) => {
                abort = Some(format!("t = {t:.2} s: planner failed: {e}"));
                break;
            }
        };
        let input = out.applied;
        let v_star = out.xi_star.first().map_or(meas.kinematic.v_x, |x| x.v_x);

        let (torque, yaw_moment, force_target, allocation_residual) = if sc.tv_enabled {
            let o = tv.step(&TvInput {
                delta_star: input.delta_f,
                v_star,
                v_x: state.v_x,
                yaw_rate: state.r,
                mu: sc.mu,
                tires: meas.tires,
            });
            let tg = [o.target.f_x_des, o.target.f_y_des, o.target.g_z_des];
            (o.command, o.net_yaw_moment, tg, o.allocation.residual)
        } else {
            // Equal torques through inverse wheel dynamics for the commanded acceleration.
            let r_eff = params.wheel_radius_eff;
            let per_wheel = params.mass * input.a_x * r_eff / 4.0 + sc.plant.wheel_inertia * input.a_x / r_eff;
            (TorqueCommand::uniform(4.0 * per_wheel), 0.0, [0.0; 3], 0.0)
        };

        let separation = lead.as_ref().map(|(l, _)| {
            let body = rectangle(pos, state.psi, sc.footprint.front, sc.footprint.rear, params.body_width);
            rectangle_separation(&body, &l.corners())
        });

        rows.push(TraceRow {
            t,
            plant: state,
            s: proj.s,
            e_y: proj.e_y,
            e_psi: wrap_angle(proj.psi_ref - state.psi),
            kappa: proj.kappa,
            mode,
            region,
            input,
            v_star,
            status: out.status,
            iterations: out.iterations,
            kkt_residual: out.kkt_residual,
            objective: out.objective,
            slack_used: out.slack_used,
            tube_reset: out.tube_reset,
            torque,
            yaw_moment,
            force_target,
            force_measured: [meas.cg.f_x, meas.cg.f_y, meas.cg.g_z],
            allocation_residual,
            lead: lead.as_ref().map(|(l, _)| (l.pos.x, l.pos.y, l.psi)),
            separation,
        });
        if k == n_steps {
            break;
        }
        match plant.advance(&state, input.delta_f, &torque.t, t_s, t) {
            Ok(s) => state = s,
            Err(e) => {
                abort = Some(format!("t = {t:.2} s: {e}"));
                break;
            }
        }
        delta_prev = input.delta_f;
        s_hint = proj.s;
    }
    if let Some(a) = &abort {
        log::warn!("{}: run aborted: {a}", sc.name);
    }

    let (window, complete) = manoeuvre_window(&rows, sc.lead.is_some());
    let metrics = compute_metrics(&rows, window, complete, sc.lead.is_some(), &sc.edges)?;
    Ok(SimTrace {
        scenario: sc.name.clone(),
        variant: sc.variant(),
        t_s,
        rows,
        metrics,
        window,
        manoeuvre_complete: complete,
        abort,
    })
}

/// First FCC activation to the first NONE that follows it. Without a NONE the window
/// extends to the last sample and the manoeuvre counts as incomplete.
pub fn manoeuvre_window(rows: &[TraceRow], has_lead: bool) -> (Option<(f64, f64)>, bool) {
    if !has_lead {
        return (None, true);
    }
    let Some(i0) = rows.iter().position(|r| r.mode == Mode::Fcc) else {
        return (None, false);
    };
    match rows[i0..].iter().position(|r| r.mode == Mode::None) {
        Some(j) => (Some((rows[i0].t, rows[i0 + j].t)), true),
        None => {
            let t_end = rows[rows.len() - 1].t;
            ((t_end > rows[i0].t).then_some((rows[i0].t, t_end)), false)
        }
    }
}

/// Effort integrals over the manoeuvre window; tracking errors after it (the whole run
/// when there is no lead or the manoeuvre never completes).
pub fn compute_metrics(
    rows: &[TraceRow],
    window: Option<(f64, f64)>,
    complete: bool,
    has_lead: bool,
    edges: &RoadEdges,
) -> Result<Metrics> {
    let mut m = Metrics::default();
    if rows.is_empty() {
        return Ok(m);
    }
    if let Some((t_in, t_fin)) = window {
        let t: Vec<f64> = rows.iter().map(|r| r.t).collect();
        let sig = |f: &dyn Fn(&TraceRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
        m.iaca_delta = compute_iaca(&t, &sig(&|r| r.input.delta_f), t_in, t_fin)?;
        m.iaca_ax = compute_iaca(&t, &sig(&|r| r.input.a_x), t_in, t_fin)?;
        m.iaca_mz = compute_iaca(&t, &sig(&|r| r.yaw_moment), t_in, t_fin)?;
    }
    let t_track = match (has_lead, complete, window) {
        (true, true, Some((_, t_fin))) => t_fin,
        _ => f64::NEG_INFINITY,
    };
    for r in rows.iter().filter(|r| r.t >= t_track) {
        m.max_e_y = m.max_e_y.max(r.e_y.abs());
        m.max_e_psi = m.max_e_psi.max(r.e_psi.abs());
    }
    m.min_separation = rows.iter().filter_map(|r| r.separation).reduce(f64::min);
    m.collision = m.min_separation.is_some_and(|d| d <= 0.0);
    m.boundary_violation = rows.iter().any(|r| r.e_y > edges.left || r.e_y < edges.right);
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SweepAxis {
    /// Subject speeds in km/h.
    Speed(Vec<f64>),
    /// Road radii in m; the template's turn direction is kept.
    Radius(Vec<f64>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Speed(_) => "speed_kmh",
            SweepAxis::Radius(_) => "radius_m",
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            SweepAxis::Speed(v) | SweepAxis::Radius(v) => v,
        }
    }

    pub fn apply(&self, template: &Scenario, value: f64) -> Scenario {
        let mut s = template.clone();
        match self {
            SweepAxis::Speed(_) => s.speed_kmh = value,
            SweepAxis::Radius(_) => {
                let turn = match &template.path {
                    PathSpec::Arc { turn, .. } => *turn,
                    _ => Turn::Right,
                };
                s.path = PathSpec::Arc { radius: value, turn };
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub variant: Variant,
    pub metrics: Option<Metrics>,
    pub manoeuvre_complete: bool,
    pub max_kkt_residual: f64,
    pub abort: Option<String>,
    pub error: Option<String>,
    pub wall_time_s: f64,
}

/// Run every (axis value, variant) pair in parallel. Failures are recorded per row.
pub fn sweep(template: &Scenario, axis: &SweepAxis, variants: &[Variant]) -> Result<Vec<SweepRow>> {
    let mut jobs = Vec::new();
    for &value in axis.values() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::Scenario(format!("{} value {value} must be positive", axis.name())));
        }
        for &variant in variants {
            let mut sc = axis.apply(template, value);
            sc.mpc.variant = variant;
            sc.name = format!("{}-{}={value}", variant.as_str(), axis.name());
            jobs.push((value, variant, sc));
        }
    }
    Ok(jobs
        .into_par_iter()
        .map(|(axis_value, variant, sc)| {
            let started = Instant::now();
            let res = run(&sc);
            let wall_time_s = started.elapsed().as_secs_f64();
            match res {
                Ok(tr) => SweepRow {
                    axis_value,
                    variant,
                    metrics: Some(tr.metrics),
                    manoeuvre_complete: tr.manoeuvre_complete,
                    max_kkt_residual: tr.max_kkt_residual(),
                    abort: tr.abort,
                    error: None,
                    wall_time_s,
                },
                Err(e) => SweepRow {
                    axis_value,
                    variant,
                    metrics: None,
                    manoeuvre_complete: false,
                    max_kkt_residual: 0.0,
                    abort: None,
                    error: Some(e.to_string()),
                    wall_time_s,
                },
            }
        })
        .collect())
}

const TABLE_METRICS: [(&str, fn(&Metrics) -> Option<f64>); 6] = [
    ("IACA_delta", |m| Some(m.iaca_delta)),
    ("IACA_ax", |m| Some(m.iaca_ax)),
    ("IACA_Mz", |m| Some(m.iaca_mz)),
    ("max_e_y", |m| Some(m.max_e_y)),
    ("max_e_psi", |m| Some(m.max_e_psi)),
    ("min_separation", |m| m.min_separation),
];

/// Metrics as rows (metric, variant) and axis values as columns.
pub fn sweep_table_csv(axis: &SweepAxis, rows: &[SweepRow]) -> String {
    let mut variants: Vec<Variant> = Vec::new();
    for r in rows {
        if !variants.contains(&r.variant) {
            variants.push(r.variant);
        }
    }
    let mut out = format!("metric,variant");
    for v in axis.values() {
        out.push_str(&format!(",{}={v}", axis.name()));
    }
    out.push('\n');
    for (name, get) in TABLE_METRICS {
        for variant in &variants {
            out.push_str(&format!("{name},{}", variant.as_str()));
            for v in axis.values() {
                let cell = rows
                    .iter()
                    .find(|r| r.variant == *variant && r.axis_value == *v)
                    .and_then(|r| r.metrics.as_ref())
                    .and_then(get);
                match cell {
                    Some(x) => out.push_str(&format!(",{x:.6}")),
                    None => out.push_str(",NA"),
                }
            }
            out.push('\n');
        }
    }
    out
}
