//! Receding-horizon trajectory planners: nominal, offset-free and tube-based robust MPC.
//!
//! Every planner works in a local frame whose origin is the subject's projection on the
//! reference path and whose x-axis follows the path heading there. The linearised
//! kinematic model assumes a small heading, which this frame keeps true on curved
//! roads. Region halfspaces and references are rotated into that frame each step and
//! the predicted trajectory is mapped back to world coordinates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constraints::ConvexRegion;
use crate::error::{MpcError, QpError};
use crate::geometry::{compute_mrpi, spectral_radius, Point2, Polytope, Zonotope};
use crate::models::{
    aug_idx, build_augmented, build_lpv_vertices, compute_disturbance_set, discrete_at, idx,
    ControlInput, KinematicState, LpvVertexSet, VehicleParams, NAUG, NU, NX,
};
use crate::qp::{self, HorizonSpec, PlanarRow, QpStatus, SolverSettings, WarmStart};
use crate::reference_path::{Projection, RoadPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Nominal,
    OffsetFree,
    Robust,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Nominal, Variant::OffsetFree, Variant::Robust];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Nominal => "nominal",
            Variant::OffsetFree => "offset_free",
            Variant::Robust => "robust",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "nominal" | "nom" => Some(Variant::Nominal),
            "offset_free" | "offsetfree" | "off" => Some(Variant::OffsetFree),
            "robust" | "rob" | "tube" => Some(Variant::Robust),
            _ => None,
        }
    }
}

/// Box bounds on the planning state `[x, y, v_x, ψ]` in the local frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateBounds {
    pub lo: [f64; NX],
    pub hi: [f64; NX],
}

impl Default for StateBounds {
    fn default() -> Self {
        Self {
            lo: [-50.0, -10.0, 0.0, -0.35],
            hi: [150.0, 10.0, 40.0, 0.35],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputBounds {
    pub lo: [f64; NU],
    pub hi: [f64; NU],
}

impl Default for InputBounds {
    fn default() -> Self {
        Self {
            lo: [-0.2, -6.0],
            hi: [0.2, 3.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustConfig {
    /// Speed interval of the polytopic model; `None` derives it from the reference speed.
    pub v_range: Option<(f64, f64)>,
    /// Diagonal LQR weights of the ancillary gain.
    pub gain_q: [f64; NX],
    pub gain_r: [f64; NU],
    /// Box added to the model-family disturbance to cover plant mismatch.
    pub mismatch_floor: [f64; NX],
    pub mrpi_eps: f64,
}

impl Default for RobustConfig {
    fn default() -> Self {
        Self {
            v_range: None,
            gain_q: [1.0; NX],
            gain_r: [10.0, 1.0],
            mismatch_floor: [0.02, 0.01, 0.02, 0.002],
            mrpi_eps: 1e-3,
        }
    }
}

impl RobustConfig {
    /// `[v_ref − 15 km/h, v_ref + 5 km/h]`, kept above 1 m/s.
    pub fn speed_range(&self, v_ref: f64) -> (f64, f64) {
        self.v_range
            .unwrap_or(((v_ref - 15.0 / 3.6).max(1.0), v_ref + 5.0 / 3.6))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub variant: Variant,
    pub horizon: usize,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p: DMatrix<f64>,
    /// Weights on `(e_y, e_ψ)` for the offset-free planner; the terminal block is scaled
    /// like `P` relative to `Q`.
    pub error_weights: [f64; 2],
    pub state_bounds: StateBounds,
    pub input_bounds: InputBounds,
    pub error_bounds: [(f64, f64); 2],
    pub slack_penalty: f64,
    pub robust: RobustConfig,
    pub solver: SolverSettings,
}

impl Default for MpcConfig {
    fn default() -> Self {
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.5, 10.0]));
        Self {
            variant: Variant::Nominal,
            horizon: 14,
            p: &q * 10.0,
            q,
            r: DMatrix::from_diagonal(&DVector::from_vec(vec![5000.0, 1.0])),
            error_weights: [20.0, 20.0],
            state_bounds: StateBounds::default(),
            input_bounds: InputBounds::default(),
            error_bounds: [(-4.0, 4.0), (-0.15, 0.15)],
            slack_penalty: 1e5,
            robust: RobustConfig::default(),
            solver: SolverSettings::default(),
        }
    }
}

impl MpcConfig {
    pub fn with_variant(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), MpcError> {
        if self.horizon < 2 {
            return Err(MpcError::Qp(QpError::Horizon {
                min: 2,
                got: self.horizon,
            }));
        }
        let square = |m: &DMatrix<f64>, n: usize| m.nrows() == n && m.ncols() == n;
        if !square(&self.q, NX) || !square(&self.p, NX) || !square(&self.r, NU) {
            return Err(MpcError::Config(format!(
                "weights must be Q {NX}×{NX}, P {NX}×{NX}, R {NU}×{NU}"
            )));
        }
        qp::check_psd("Q", &self.q)?;
        qp::check_psd("P", &self.p)?;
        qp::check_psd("R", &self.r)?;
        let r_min = self
            .r
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if !(r_min > 0.0) {
            return Err(MpcError::Config(format!("R must be positive definite (min eigenvalue {r_min:e})")));
        }
        if self.error_weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(MpcError::Config("error weights must be nonnegative".into()));
        }
        let boxes_ok = (0..NX).all(|i| self.state_bounds.lo[i] < self.state_bounds.hi[i])
            && (0..NU).all(|i| self.input_bounds.lo[i] < self.input_bounds.hi[i])
            && self.error_bounds.iter().all(|(l, h)| l < h);
        if !boxes_ok {
            return Err(MpcError::Config("every bound needs lo < hi".into()));
        }
        if !(self.slack_penalty > 0.0) {
            return Err(MpcError::Config("slack penalty must be positive".into()));
        }
        Ok(())
    }

    /// Ratio between terminal and stage weights, used to extend `P` for the error states.
    fn terminal_ratio(&self) -> f64 {
        let q = self.q.trace();
        if q > 0.0 {
            self.p.trace() / q
        } else {
            1.0
        }
    }
}

/// Rigid frame attached to a path point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    pub origin: Point2,
    pub heading: f64,
}

impl LocalFrame {
    pub fn at_projection(path: &RoadPath, proj: &Projection) -> Self {
        Self {
            origin: path.pose_at(proj.s).point(),
            heading: proj.psi_ref,
        }
    }

    pub fn point_to_local(&self, p: &Point2) -> Point2 {
        let (s, c) = self.heading.sin_cos();
        let d = p - self.origin;
        Point2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }

    pub fn point_to_global(&self, q: &Point2) -> Point2 {
        let (s, c) = self.heading.sin_cos();
        self.origin + Point2::new(c * q.x - s * q.y, s * q.x + c * q.y)
    }

    /// `[x, y, v_x, ψ]` in this frame.
    pub fn state_to_local(&self, st: &KinematicState) -> DVector<f64> {
        let p = self.point_to_local(&Point2::new(st.x, st.y));
        DVector::from_vec(vec![p.x, p.y, st.v_x, wrap_angle(st.psi - self.heading)])
    }

    pub fn state_to_global(&self, xi: &[f64]) -> KinematicState {
        let p = self.point_to_global(&Point2::new(xi[idx::X], xi[idx::Y]));
        KinematicState::new(p.x, p.y, xi[idx::V], xi[idx::PSI] + self.heading)
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if r <= -std::f64::consts::PI {
        r + two_pi
    } else {
        r
    }
}

/// Data available to a planner at one sampling instant.
#[derive(Debug, Clone, Copy)]
pub struct PlanContext<'a> {
    pub state: &'a KinematicState,
    pub path: &'a RoadPath,
    pub proj: &'a Projection,
    pub region: &'a ConvexRegion,
    pub v_ref: f64,
    /// Arc length of the reference point at the current instant; the projection when `None`.
    pub s_ref: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlannerOutput {
    /// Predicted states for `k = 1..=N` in world coordinates.
    pub xi_star: Vec<KinematicState>,
    /// Planned inputs for `k = 0..N−1` (the nominal inputs `ū` for the robust planner).
    pub u_star: Vec<ControlInput>,
    /// Input sent to the vehicle.
    pub applied: ControlInput,
    pub status: QpStatus,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub active_constraints: Vec<usize>,
    pub slack_used: bool,
    pub max_slack: f64,
    /// Largest violation of the prediction model along the returned trajectory.
    pub dynamics_residual: f64,
    /// Smallest margin of the predicted positions to the planning halfspaces
    /// (tightened ones for the robust planner).
    pub region_margin: f64,
    pub tube_reset: bool,
}

/// Solution of the discrete algebraic Riccati equation by fixed-point iteration.
pub fn dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>, MpcError> {
    let mut p = q.clone();
    for _ in 0..100_000 {
        let btp = b.transpose() * &p;
        let s = r + &btp * b;
        let gain = s.clone().lu().solve(&(&btp * a)).ok_or(MpcError::Riccati)?;
        let next = q + a.transpose() * &p * a - a.transpose() * &p * b * gain;
        let next = 0.5 * (&next + next.transpose());
        let diff = (&next - &p).amax();
        if !next.iter().all(|v| v.is_finite()) {
            return Err(MpcError::Riccati);
        }
        p = next;
        if diff <= 1e-13 * p.amax().max(1.0) {
            return Ok(p);
        }
    }
    Err(MpcError::Riccati)
}

/// LQR gain `K` for `u = K x`.
pub fn lqr_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>, MpcError> {
    let p = dare(a, b, q, r)?;
    let btp = b.transpose() * &p;
    let s = r + &btp * b;
    s.lu()
        .solve(&(&btp * a))
        .map(|k| -k)
        .ok_or(MpcError::Riccati)
}

/// `K = −B⁻¹A` for square invertible `B`, placing every closed-loop pole at zero.
pub fn deadbeat_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, MpcError> {
    if b.nrows() != b.ncols() {
        return Err(MpcError::Config("deadbeat gain needs a square input matrix".into()));
    }
    b.clone()
        .lu()
        .solve(a)
        .map(|k| -k)
        .ok_or_else(|| MpcError::Config("input matrix is singular".into()))
}

/// Rejects `K` unless the averaged model and every vertex are stabilised.
pub fn check_gain(lpv: &LpvVertexSet, k: &DMatrix<f64>) -> Result<Vec<f64>, MpcError> {
    let mut radii = vec![spectral_radius(&(&lpv.a_bar + &lpv.b_bar * k))];
    for v in &lpv.vertices {
        radii.push(spectral_radius(&(&v.a + &v.b * k)));
    }
    if radii.iter().any(|r| !(*r < 1.0)) {
        return Err(MpcError::GainDesign { radii });
    }
    Ok(radii)
}

/// LQR on `(Ā, B̄)` with diagonal weights, verified at every vertex.
pub fn design_ancillary_gain(
    lpv: &LpvVertexSet,
    gain_q: &[f64; NX],
    gain_r: &[f64; NU],
) -> Result<DMatrix<f64>, MpcError> {
    let q = DMatrix::from_diagonal(&DVector::from_column_slice(gain_q));
    let r = DMatrix::from_diagonal(&DVector::from_column_slice(gain_r));
    let k = lqr_gain(&lpv.a_bar, &lpv.b_bar, &q, &r)?;
    check_gain(lpv, &k)?;
    Ok(k)
}

/// Robust invariant set of `e⁺ = A_K e + w`, split into the independent coordinate
/// blocks of `A_K` and `W`.
#[derive(Debug, Clone)]
pub struct Tube {
    dim: usize,
    blocks: Vec<(Vec<usize>, Polytope)>,
    /// Largest truncation index `s` over the blocks.
    pub s: usize,
    pub alpha: f64,
}

impl Tube {
    pub fn compute(a_k: &DMatrix<f64>, w: &Zonotope, eps: f64) -> Result<Self, MpcError> {
        let n = a_k.nrows();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            p[i] = r;
            r
        }
        let union = |p: &mut Vec<usize>, i: usize, j: usize| {
            let (ri, rj) = (find(p, i), find(p, j));
            if ri != rj {
                p[ri] = rj;
            }
        };
        let scale = a_k.amax().max(1.0);
        for i in 0..n {
            for j in 0..n {
                if a_k[(i, j)].abs() > 1e-14 * scale {
                    union(&mut parent, i, j);
                }
            }
        }
        for g in w.generators.column_iter() {
            let nz: Vec<usize> = (0..n).filter(|&i| g[i] != 0.0).collect();
            for pair in nz.windows(2) {
                union(&mut parent, pair[0], pair[1]);
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            match groups.iter_mut().find(|g| find(&mut parent, g[0]) == r) {
                Some(g) => g.push(i),
                None => groups.push(vec![i]),
            }
        }
        let mut blocks = Vec::new();
        let (mut s_max, mut alpha_max) = (0, 0.0_f64);
        for g in groups {
            let m = g.len();
            let a_blk = DMatrix::from_fn(m, m, |i, j| a_k[(g[i], g[j])]);
            let center = DVector::from_fn(m, |i, _| w.center[g[i]]);
            let gens = DMatrix::from_fn(m, w.order(), |i, j| w.generators[(g[i], j)]);
            let w_blk = Polytope::from_zonotope(Zonotope::new(center, gens)?);
            let res = compute_mrpi(&a_blk, &w_blk, eps)?;
            s_max = s_max.max(res.s);
            alpha_max = alpha_max.max(res.alpha);
            blocks.push((g, res.set));
        }
        Ok(Self {
            dim: n,
            blocks,
            s: s_max,
            alpha: alpha_max,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[(Vec<usize>, Polytope)] {
        &self.blocks
    }

    pub fn support(&self, d: &DVector<f64>) -> f64 {
        self.blocks
            .iter()
            .map(|(g, p)| {
                let sub = DVector::from_fn(g.len(), |i, _| d[g[i]]);
                p.support(&sub).expect("block dimensions agree")
            })
            .sum()
    }

    /// Membership of `e` in `scale · Z`.
    pub fn contains_scaled(&self, e: &DVector<f64>, scale: f64) -> bool {
        self.blocks.iter().all(|(g, p)| {
            let sub = DVector::from_fn(g.len(), |i, _| e[g[i]]);
            p.contains_scaled(&sub, scale).unwrap_or(false)
        })
    }

    /// The full set as one zonotope (or the origin if a block is not a zonotope).
    pub fn as_polytope(&self) -> Polytope {
        let mut center = DVector::zeros(self.dim);
        let mut cols: Vec<DVector<f64>> = Vec::new();
        for (g, p) in &self.blocks {
            if let Some(z) = p.zonotope() {
                for i in 0..g.len() {
                    center[g[i]] = z.center[i];
                }
                for c in z.generators.column_iter() {
                    let mut full = DVector::zeros(self.dim);
                    for i in 0..g.len() {
                        full[g[i]] = c[i];
                    }
                    cols.push(full);
                }
            }
        }
        let gens = if cols.is_empty() {
            DMatrix::zeros(self.dim, 0)
        } else {
            DMatrix::from_columns(&cols)
        };
        Polytope::from_zonotope(Zonotope::new(center, gens).expect("consistent dimensions"))
    }
}

/// Offline data of the tube planner.
#[derive(Debug, Clone)]
pub struct RobustSetup {
    pub lpv: LpvVertexSet,
    pub k: DMatrix<f64>,
    pub w: Polytope,
    pub tube: Tube,
    pub state_bounds: StateBounds,
    pub input_bounds: InputBounds,
    pub tight_state: StateBounds,
    pub tight_input: InputBounds,
    pub spectral_radii: Vec<f64>,
}

impl RobustSetup {
    pub fn compute(params: &VehicleParams, cfg: &MpcConfig, v_ref: f64) -> Result<Self, MpcError> {
        let (v_lo, v_hi) = cfg.robust.speed_range(v_ref);
        let lpv = build_lpv_vertices(params, v_lo, v_hi, params.t_s)?;
        let k = design_ancillary_gain(&lpv, &cfg.robust.gain_q, &cfg.robust.gain_r)?;
        let spectral_radii = check_gain(&lpv, &k)?;
        let sb = cfg.state_bounds;
        let ib = cfg.input_bounds;
        let x_set = Polytope::from_box(&sb.lo, &sb.hi)?;
        let u_set = Polytope::from_box(&ib.lo, &ib.hi)?;
        let w_model = compute_disturbance_set(&lpv, &x_set, &u_set)?;
        let floor = Polytope::from_symmetric_box(&cfg.robust.mismatch_floor)?;
        let w = w_model.minkowski_sum(&floor)?;
        let w_z = w.zonotope().cloned().ok_or_else(|| {
            MpcError::Config("disturbance set must be a box".into())
        })?;
        let a_k = &lpv.a_bar + &lpv.b_bar * &k;
        let tube = Tube::compute(&a_k, &w_z, cfg.robust.mrpi_eps)?;
        let unit = |n: usize, i: usize, s: f64| {
            let mut e = DVector::zeros(n);
            e[i] = s;
            e
        };
        let mut tight_state = sb;
        for i in 0..NX {
            tight_state.lo[i] += tube.support(&unit(NX, i, -1.0));
            tight_state.hi[i] -= tube.support(&unit(NX, i, 1.0));
            if !(tight_state.lo[i] < tight_state.hi[i]) {
                return Err(MpcError::EmptyTightenedSet("state"));
            }
        }
        let mut tight_input = ib;
        for j in 0..NU {
            let row = k.row(j).transpose();
            tight_input.lo[j] += tube.support(&(-&row));
            tight_input.hi[j] -= tube.support(&row);
            if !(tight_input.lo[j] < tight_input.hi[j]) {
                return Err(MpcError::EmptyTightenedSet("input"));
            }
        }
        if !(tight_state.lo[idx::V] <= v_ref && v_ref <= tight_state.hi[idx::V]) {
            log::warn!(
                "reference speed {v_ref:.2} m/s lies outside the tightened speed bounds [{:.2}, {:.2}]",
                tight_state.lo[idx::V],
                tight_state.hi[idx::V]
            );
        }
        log::debug!(
            "tube: s = {}, alpha = {:.2e}, radii = {spectral_radii:?}",
            tube.s,
            tube.alpha
        );
        Ok(Self {
            lpv,
            k,
            w,
            tube,
            state_bounds: sb,
            input_bounds: ib,
            tight_state,
            tight_input,
            spectral_radii,
        })
    }

    /// Support of `Z` along a planar normal acting on `(x, y)`.
    pub fn planar_support(&self, n: &Point2) -> f64 {
        let mut d = DVector::zeros(NX);
        d[idx::X] = n.x;
        d[idx::Y] = n.y;
        self.tube.support(&d)
    }
}

/// One planner instance per simulated vehicle.
#[derive(Debug, Clone)]
pub struct Planner {
    cfg: MpcConfig,
    params: VehicleParams,
    robust: Option<RobustSetup>,
    /// Nominal tube centre in world coordinates.
    nominal: Option<KinematicState>,
    warm: Option<WarmStart>,
    pub tube_resets: usize,
}

struct Problem {
    spec: HorizonSpec,
    /// Map from the model's state ordering to `[x, y, v, ψ]`.
    xi_of: [usize; NX],
}

impl Planner {
    /// `v_ref` fixes the speed interval of the robust planner.
    pub fn new(cfg: MpcConfig, params: VehicleParams, v_ref: f64) -> Result<Self, MpcError> {
        cfg.validate()?;
        params.validate()?;
        let robust = match cfg.variant {
            Variant::Robust => Some(RobustSetup::compute(&params, &cfg, v_ref)?),
            _ => None,
        };
        Ok(Self {
            cfg,
            params,
            robust,
            nominal: None,
            warm: None,
            tube_resets: 0,
        })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.cfg
    }

    pub fn robust_setup(&self) -> Option<&RobustSetup> {
        self.robust.as_ref()
    }

    pub fn reset(&mut self) {
        self.nominal = None;
        self.warm = None;
        self.tube_resets = 0;
    }

    fn references(&self, ctx: &PlanContext, frame: &LocalFrame) -> Vec<DVector<f64>> {
        let t_s = self.params.t_s;
        (0..=self.cfg.horizon)
            .map(|k| {
                let s0 = ctx.s_ref.unwrap_or(ctx.proj.s);
                let pose = ctx.path.pose_at(s0 + k as f64 * t_s * ctx.v_ref);
                let p = frame.point_to_local(&pose.point());
                DVector::from_vec(vec![p.x, p.y, ctx.v_ref, wrap_angle(pose.psi - frame.heading)])
            })
            .collect()
    }

    fn planar_rows(&self, region: &ConvexRegion, frame: &LocalFrame) -> Vec<PlanarRow> {
        region
            .halfspaces()
            .iter()
            .map(|h| {
                let (n, d) = h.to_local(&frame.origin, frame.heading).as_le();
                let tighten = self.robust.as_ref().map_or(0.0, |r| r.planar_support(&n));
                PlanarRow {
                    normal: [n.x, n.y],
                    offset: d - tighten,
                }
            })
            .collect()
    }

    fn build_problem(
        &self,
        ctx: &PlanContext,
        frame: &LocalFrame,
        xi0: &DVector<f64>,
    ) -> Result<Problem, MpcError> {
        let cfg = &self.cfg;
        let refs = self.references(ctx, frame);
        let planar = self.planar_rows(ctx.region, frame);
        let to_vec = |a: &[f64]| DVector::from_column_slice(a);
        match cfg.variant {
            Variant::Nominal | Variant::Robust => {
                let (a, b, sb, ib) = match &self.robust {
                    Some(r) => (r.lpv.a_bar.clone(), r.lpv.b_bar.clone(), r.tight_state, r.tight_input),
                    None => {
                        let m = discrete_at(&self.params, xi0[idx::V].max(0.1), self.params.t_s)?;
                        (m.a, m.b, cfg.state_bounds, cfg.input_bounds)
                    }
                };
                Ok(Problem {
                    spec: HorizonSpec {
                        a,
                        b,
                        horizon: cfg.horizon,
                        q: cfg.q.clone(),
                        r: cfg.r.clone(),
                        p: cfg.p.clone(),
                        x0: xi0.clone(),
                        x_ref: refs,
                        state_bounds: Some((to_vec(&sb.lo), to_vec(&sb.hi))),
                        input_bounds: Some((to_vec(&ib.lo), to_vec(&ib.hi))),
                        position_index: (idx::X, idx::Y),
                        planar,
                        slack_penalty: None,
                    },
                    xi_of: [idx::X, idx::Y, idx::V, idx::PSI],
                })
            }
            Variant::OffsetFree => {
                let base = discrete_at(&self.params, xi0[idx::V].max(0.1), self.params.t_s)?;
                let aug = build_augmented(&base)?;
                // η = [x, v, y, ψ, e_y, e_ψ, d]
                let eta_of_xi = [aug_idx::X, aug_idx::Y, aug_idx::V, aug_idx::PSI];
                let mut q = DMatrix::zeros(NAUG, NAUG);
                for i in 0..NX {
                    for j in 0..NX {
                        q[(eta_of_xi[i], eta_of_xi[j])] = cfg.q[(i, j)];
                    }
                }
                let mut p = DMatrix::zeros(NAUG, NAUG);
                for i in 0..NX {
                    for j in 0..NX {
                        p[(eta_of_xi[i], eta_of_xi[j])] = cfg.p[(i, j)];
                    }
                }
                let ratio = cfg.terminal_ratio();
                q[(aug_idx::EY, aug_idx::EY)] = cfg.error_weights[0];
                q[(aug_idx::EPSI, aug_idx::EPSI)] = cfg.error_weights[1];
                p[(aug_idx::EY, aug_idx::EY)] = cfg.error_weights[0] * ratio;
                p[(aug_idx::EPSI, aug_idx::EPSI)] = cfg.error_weights[1] * ratio;
                let lift = |xi: &DVector<f64>, e_y: f64, e_psi: f64, d: f64| {
                    let mut eta = DVector::zeros(NAUG);
                    for i in 0..NX {
                        eta[eta_of_xi[i]] = xi[i];
                    }
                    eta[aug_idx::EY] = e_y;
                    eta[aug_idx::EPSI] = e_psi;
                    eta[aug_idx::D] = d;
                    eta
                };
                let d = ctx.proj.kappa;
                let x0 = lift(xi0, ctx.proj.e_y, wrap_angle(ctx.proj.psi_ref - ctx.state.psi), d);
                let refs = refs.iter().map(|r| lift(r, 0.0, 0.0, d)).collect();
                let sb = cfg.state_bounds;
                let mut lo = lift(&to_vec(&sb.lo), cfg.error_bounds[0].0, cfg.error_bounds[1].0, f64::NEG_INFINITY);
                let mut hi = lift(&to_vec(&sb.hi), cfg.error_bounds[0].1, cfg.error_bounds[1].1, f64::INFINITY);
                lo[aug_idx::D] = f64::NEG_INFINITY;
                hi[aug_idx::D] = f64::INFINITY;
                let ib = cfg.input_bounds;
                Ok(Problem {
                    spec: HorizonSpec {
                        a: aug.a,
                        b: aug.b,
                        horizon: cfg.horizon,
                        q,
                        r: cfg.r.clone(),
                        p,
                        x0,
                        x_ref: refs,
                        state_bounds: Some((lo, hi)),
                        input_bounds: Some((to_vec(&ib.lo), to_vec(&ib.hi))),
                        position_index: (aug_idx::X, aug_idx::Y),
                        planar,
                        slack_penalty: None,
                    },
                    xi_of: eta_of_xi,
                })
            }
        }
    }

    /// Plan from the current measurement and return the input to apply.
    pub fn plan(&mut self, ctx: &PlanContext) -> Result<PlannerOutput, MpcError> {
        let frame = LocalFrame::at_projection(ctx.path, ctx.proj);
        let xi = frame.state_to_local(ctx.state);
        if !xi.iter().all(|v| v.is_finite()) {
            return Err(MpcError::Config("non-finite state".into()));
        }
        let mut tube_reset = false;
        let xi0 = match (&self.robust, &self.nominal) {
            (Some(r), Some(nom)) => {
                let xi_bar = frame.state_to_local(nom);
                let e = &xi - &xi_bar;
                if r.tube.contains_scaled(&e, 1.0 + 1e-6) {
                    xi_bar
                } else {
                    tube_reset = true;
                    self.tube_resets += 1;
                    xi.clone()
                }
            }
            _ => xi.clone(),
        };
        let problem = self.build_problem(ctx, &frame, &xi0)?;
        let (sol, slack_used) = self.solve(&problem.spec)?;
        let spec = &problem.spec;
        let nx = spec.nx();
        let state_at = |k: usize| -> DVector<f64> {
            if k == 0 {
                spec.x0.clone()
            } else {
                sol.z.rows(spec.state_index(k, 0), nx).into_owned()
            }
        };
        let input_at = |k: usize| sol.z.rows(spec.input_index(k, 0), NU).into_owned();
        let mut dyn_res = 0.0_f64;
        for k in 0..spec.horizon {
            let pred = &spec.a * state_at(k) + &spec.b * input_at(k);
            dyn_res = dyn_res.max((pred - state_at(k + 1)).amax());
        }
        let xi_local = |k: usize| -> Vec<f64> {
            let s = state_at(k);
            problem.xi_of.iter().map(|&i| s[i]).collect()
        };
        let mut margin = f64::INFINITY;
        for k in 1..=spec.horizon {
            let s = xi_local(k);
            for row in &spec.planar {
                margin = margin.min(row.offset - (row.normal[0] * s[idx::X] + row.normal[1] * s[idx::Y]));
            }
        }
        let xi_star: Vec<KinematicState> = (1..=spec.horizon)
            .map(|k| frame.state_to_global(&xi_local(k)))
            .collect();
        let u_star: Vec<ControlInput> = (0..spec.horizon)
            .map(|k| ControlInput::from_slice(input_at(k).as_slice()))
            .collect();
        let mut applied = u_star[0];
        if let Some(r) = &self.robust {
            let e = &xi - &xi0;
            let fb = &r.k * &e;
            let raw = [applied.delta_f + fb[0], applied.a_x + fb[1]];
            let ib = &r.input_bounds;
            let mut clamped = raw;
            for j in 0..NU {
                clamped[j] = raw[j].clamp(ib.lo[j], ib.hi[j]);
            }
            if (0..NU).any(|j| (clamped[j] - raw[j]).abs() > 1e-9) {
                log::warn!("ancillary input {raw:?} left the input box and was clamped");
            }
            applied = ControlInput::new(clamped[0], clamped[1]);
            self.nominal = Some(xi_star[0]);
        }
        let max_slack = if slack_used {
            (1..=spec.horizon)
                .flat_map(|k| (0..spec.slacks_per_step()).map(move |r| (k, r)))
                .map(|(k, r)| sol.z[spec.slack_index(k, r)])
                .fold(0.0, f64::max)
        } else {
            0.0
        };
        Ok(PlannerOutput {
            xi_star,
            u_star,
            applied,
            status: sol.status,
            objective: sol.objective,
            kkt_residual: sol.kkt_residual,
            iterations: sol.iterations,
            active_constraints: sol.active_set.clone(),
            slack_used,
            max_slack,
            dynamics_residual: dyn_res,
            region_margin: margin,
            tube_reset,
        })
    }

    fn solve(&mut self, spec: &HorizonSpec) -> Result<(qp::QpSolution, bool), MpcError> {
        let hard = qp::assemble(spec)?;
        let sol = qp::solve_with(&hard, &self.cfg.solver, self.warm.as_ref())?;
        if sol.status == QpStatus::Optimal {
            self.warm = Some(WarmStart {
                active_set: sol.active_set.clone(),
            });
            return Ok((sol, false));
        }
        log::info!(
            "hard planning problem returned {}; retrying with softened region and state constraints",
            sol.status.as_str()
        );
        let mut soft_spec = spec.clone();
        soft_spec.slack_penalty = Some(self.cfg.slack_penalty);
        let soft = qp::assemble(&soft_spec)?;
        let sol = qp::solve_with(&soft, &self.cfg.solver, None)?;
        self.warm = None;
        match sol.status {
            QpStatus::Optimal => Ok((sol, true)),
            QpStatus::Infeasible => Err(MpcError::Infeasible),
            QpStatus::MaxIter => Err(MpcError::Solver(format!(
                "softened problem stopped at KKT residual {:.2e}",
                sol.kkt_residual
            ))),
        }
    }
}

fn one_shot(
    variant: Variant,
    state: &KinematicState,
    region: &ConvexRegion,
    path: &RoadPath,
    proj: &Projection,
    cfg: &MpcConfig,
    params: &VehicleParams,
    v_ref: f64,
) -> Result<PlannerOutput, MpcError> {
    let cfg = MpcConfig {
        variant,
        ..cfg.clone()
    };
    let mut planner = Planner::new(cfg, *params, v_ref)?;
    planner.plan(&PlanContext {
        state,
        path,
        proj,
        region,
        v_ref,
        s_ref: None,
    })
}

/// Single nominal plan from a fresh planner.
#[allow(clippy::too_many_arguments)]
pub fn plan_nominal(
    state: &KinematicState,
    region: &ConvexRegion,
    path: &RoadPath,
    proj: &Projection,
    cfg: &MpcConfig,
    params: &VehicleParams,
    v_ref: f64,
) -> Result<PlannerOutput, MpcError> {
    one_shot(Variant::Nominal, state, region, path, proj, cfg, params, v_ref)
}

#[allow(clippy::too_many_arguments)]
pub fn plan_offset_free(
    state: &KinematicState,
    region: &ConvexRegion,
    path: &RoadPath,
    proj: &Projection,
    cfg: &MpcConfig,
    params: &VehicleParams,
    v_ref: f64,
) -> Result<PlannerOutput, MpcError> {
    one_shot(Variant::OffsetFree, state, region, path, proj, cfg, params, v_ref)
}

#[allow(clippy::too_many_arguments)]
pub fn plan_robust(
    state: &KinematicState,
    region: &ConvexRegion,
    path: &RoadPath,
    proj: &Projection,
    cfg: &MpcConfig,
    params: &VehicleParams,
    v_ref: f64,
) -> Result<PlannerOutput, MpcError> {
    one_shot(Variant::Robust, state, region, path, proj, cfg, params, v_ref)
}
