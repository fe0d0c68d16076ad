//! Kinematic bicycle prediction models.
//!
//! State ordering for the plain model is `ξ = [x, y, v_x, ψ]`, inputs are
//! `u = [δ_f, a_x]`. The path-error model uses `η = [x, v_x, y, ψ, e_y, e_ψ]`
//! followed by the curvature disturbance `d`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::geometry::Polytope;

pub const NX: usize = 4;
pub const NU: usize = 2;
/// Augmented state `[x, v_x, y, ψ, e_y, e_ψ, d]`.
pub const NAUG: usize = 7;

pub mod idx {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const V: usize = 2;
    pub const PSI: usize = 3;
    pub const DELTA: usize = 0;
    pub const AX: usize = 1;
}

pub mod aug_idx {
    pub const X: usize = 0;
    pub const V: usize = 1;
    pub const Y: usize = 2;
    pub const PSI: usize = 3;
    pub const EY: usize = 4;
    pub const EPSI: usize = 5;
    pub const D: usize = 6;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub l_f: f64,
    pub l_r: f64,
    pub mass: f64,
    pub i_z: f64,
    pub lane_width: f64,
    pub t_s: f64,
    pub wheel_radius_eff: f64,
    pub track_width: f64,
    /// Body width used for the collision footprint.
    pub body_width: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            l_f: 1.43,
            l_r: 1.21,
            mass: 1360.0,
            i_z: 2050.0,
            lane_width: 5.0,
            t_s: 0.1,
            wheel_radius_eff: 0.3,
            track_width: 1.5,
            body_width: 1.8,
        }
    }
}

impl VehicleParams {
    pub fn wheelbase(&self) -> f64 {
        self.l_f + self.l_r
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("l_f", self.l_f),
            ("l_r", self.l_r),
            ("mass", self.mass),
            ("I_z", self.i_z),
            ("lane_width", self.lane_width),
            ("t_s", self.t_s),
            ("wheel_radius_eff", self.wheel_radius_eff),
            ("track_width", self.track_width),
            ("body_width", self.body_width),
        ];
        for (name, value) in fields {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ModelError::InvalidParam { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KinematicState {
    pub x: f64,
    pub y: f64,
    pub v_x: f64,
    pub psi: f64,
}

impl KinematicState {
    pub fn new(x: f64, y: f64, v_x: f64, psi: f64) -> Self {
        Self { x, y, v_x, psi }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.x, self.y, self.v_x, self.psi])
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub delta_f: f64,
    pub a_x: f64,
}

impl ControlInput {
    pub fn new(delta_f: f64, a_x: f64) -> Self {
        Self { delta_f, a_x }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.delta_f, self.a_x])
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1])
    }
}

/// Linear model `ẋ = A x + B u` or `x⁺ = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Sampling time for discrete models.
    pub t_s: Option<f64>,
    pub v_nom: f64,
}

impl LtiModel {
    pub fn is_discrete(&self) -> bool {
        self.t_s.is_some()
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }
}

/// Continuous-time matrices at speed `v`, without any sign check.
pub fn kinematic_matrices(params: &VehicleParams, v: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let l = params.wheelbase();
    let mut a = DMatrix::zeros(NX, NX);
    a[(idx::X, idx::V)] = 1.0;
    a[(idx::Y, idx::PSI)] = v;
    let mut b = DMatrix::zeros(NX, NU);
    b[(idx::Y, idx::DELTA)] = v * params.l_r / l;
    b[(idx::PSI, idx::DELTA)] = v / l;
    b[(idx::V, idx::AX)] = 1.0;
    (a, b)
}

/// Kinematic bicycle linearised at `v_nom`.
pub fn build_kinematic_lti(params: &VehicleParams, v_nom: f64) -> Result<LtiModel, ModelError> {
    if !(v_nom > 0.0) || !v_nom.is_finite() {
        return Err(ModelError::NonPositiveVelocity(v_nom));
    }
    let (a, b) = kinematic_matrices(params, v_nom);
    Ok(LtiModel {
        a,
        b,
        t_s: None,
        v_nom,
    })
}

/// Zero-order-hold discretisation through the exponential of `[[A, B], [0, 0]]`.
///
/// The Taylor series is summed until the terms vanish, which happens after three
/// terms for the nilpotent kinematic model and keeps the result exact.
pub fn discretize(model: &LtiModel, t_s: f64) -> Result<LtiModel, ModelError> {
    if !(t_s > 0.0) || !t_s.is_finite() {
        return Err(ModelError::NonPositiveSampleTime(t_s));
    }
    let n = model.nx();
    let m = model.nu();
    let mut big = DMatrix::zeros(n + m, n + m);
    big.view_mut((0, 0), (n, n)).copy_from(&(&model.a * t_s));
    big.view_mut((0, n), (n, m)).copy_from(&(&model.b * t_s));
    let mut sum = DMatrix::identity(n + m, n + m);
    let mut term = DMatrix::identity(n + m, n + m);
    for k in 1..60 {
        term = &term * &big / k as f64;
        if term.amax() == 0.0 {
            break;
        }
        sum += &term;
        if term.amax() < 1e-18 * sum.amax() {
            break;
        }
    }
    Ok(LtiModel {
        a: sum.view((0, 0), (n, n)).into_owned(),
        b: sum.view((0, n), (n, m)).into_owned(),
        t_s: Some(t_s),
        v_nom: model.v_nom,
    })
}

/// Discrete kinematic model at `v` (which may be zero).
pub fn discrete_at(params: &VehicleParams, v: f64, t_s: f64) -> Result<LtiModel, ModelError> {
    let (a, b) = kinematic_matrices(params, v);
    discretize(
        &LtiModel {
            a,
            b,
            t_s: None,
            v_nom: v,
        },
        t_s,
    )
}

/// Reorders `ξ = [x, y, v_x, ψ]` into the leading block of `η = [x, v_x, y, ψ]`.
pub fn xi_to_eta_perm() -> [usize; NX] {
    // eta position i holds xi component perm[i]
    [idx::X, idx::V, idx::Y, idx::PSI]
}

/// Path-error model augmented with a constant curvature disturbance.
///
/// The error states follow the left-positive lateral offset `e_y` and the heading
/// error `e_ψ = ψ_ref − ψ`, whose reference heading rate is `v_x κ`:
///
/// ```text
/// e_y⁺ = e_y − t_s v e_ψ + B_d[y,δ] δ − (t_s² v² / 2) d
/// e_ψ⁺ = e_ψ + t_s v d − B_d[ψ,δ] δ
/// d⁺   = d
/// ```
///
/// Both rows are the exact zero-order-hold discretisation of
/// `ė_y = −v e_ψ + v l_r/L δ`, `ė_ψ = v κ − v/L δ`.
pub fn build_augmented(model: &LtiModel) -> Result<LtiModel, ModelError> {
    let t_s = model.t_s.ok_or(ModelError::NotDiscrete)?;
    let v = model.v_nom;
    let perm = xi_to_eta_perm();
    let mut a = DMatrix::zeros(NAUG, NAUG);
    let mut b = DMatrix::zeros(NAUG, NU);
    for (i, &pi) in perm.iter().enumerate() {
        for (j, &pj) in perm.iter().enumerate() {
            a[(i, j)] = model.a[(pi, pj)];
        }
        for k in 0..NU {
            b[(i, k)] = model.b[(pi, k)];
        }
    }
    use aug_idx::*;
    a[(EY, EY)] = 1.0;
    a[(EY, EPSI)] = -t_s * v;
    a[(EY, D)] = -0.5 * t_s * t_s * v * v;
    a[(EPSI, EPSI)] = 1.0;
    a[(EPSI, D)] = t_s * v;
    a[(D, D)] = 1.0;
    b[(EY, idx::DELTA)] = model.b[(idx::Y, idx::DELTA)];
    b[(EPSI, idx::DELTA)] = -model.b[(idx::PSI, idx::DELTA)];
    Ok(LtiModel {
        a,
        b,
        t_s: Some(t_s),
        v_nom: v,
    })
}

/// Polytopic family of discrete models over a speed interval.
#[derive(Debug, Clone)]
pub struct LpvVertexSet {
    pub v_range: (f64, f64),
    pub t_s: f64,
    pub vertices: Vec<LtiModel>,
    pub a_bar: DMatrix<f64>,
    pub b_bar: DMatrix<f64>,
    params: VehicleParams,
}

impl LpvVertexSet {
    pub fn model_at(&self, v: f64) -> LtiModel {
        discrete_at(&self.params, v, self.t_s).expect("sampling time validated at construction")
    }

    pub fn v_mid(&self) -> f64 {
        0.5 * (self.v_range.0 + self.v_range.1)
    }
}

/// Two vertices at the ends of `[v_min, v_max]` and their average `(Ā, B̄)`.
pub fn build_lpv_vertices(
    params: &VehicleParams,
    v_min: f64,
    v_max: f64,
    t_s: f64,
) -> Result<LpvVertexSet, ModelError> {
    if !(v_min > 0.0) || !(v_max >= v_min) || !v_max.is_finite() {
        return Err(ModelError::InvalidRange { lo: v_min, hi: v_max });
    }
    let lo = discrete_at(params, v_min, t_s)?;
    let hi = discrete_at(params, v_max, t_s)?;
    let a_bar = (&lo.a + &hi.a) * 0.5;
    let b_bar = (&lo.b + &hi.b) * 0.5;
    Ok(LpvVertexSet {
        v_range: (v_min, v_max),
        t_s,
        vertices: vec![lo, hi],
        a_bar,
        b_bar,
        params: *params,
    })
}

/// Quadratic `c0 + c1 v + c2 v²`.
#[derive(Debug, Clone, Copy, Default)]
struct Quad([f64; 3]);

impl Quad {
    fn eval(&self, v: f64) -> f64 {
        self.0[0] + v * (self.0[1] + v * self.0[2])
    }

    fn add_scaled(&mut self, other: &Quad, s: f64) {
        for i in 0..3 {
            self.0[i] += s * other.0[i];
        }
    }

    fn roots_in(&self, lo: f64, hi: f64, out: &mut Vec<f64>) {
        let start = out.len();
        let [c, b, a] = self.0;
        let scale = c.abs().max(b.abs() * hi.abs()).max(a.abs() * hi * hi);
        if scale == 0.0 {
            return;
        }
        if a.abs() * hi * hi <= 1e-14 * scale {
            if b != 0.0 {
                out.push(-c / b);
            }
        } else {
            let disc = b * b - 4.0 * a * c;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                out.push((-b + sq) / (2.0 * a));
                out.push((-b - sq) / (2.0 * a));
            }
        }
        let mut k = start;
        while k < out.len() {
            if out[k].is_finite() && out[k] > lo && out[k] < hi {
                k += 1;
            } else {
                out.swap_remove(k);
            }
        }
    }

    fn stationary(&self) -> Option<f64> {
        (self.0[2] != 0.0).then(|| -self.0[1] / (2.0 * self.0[2]))
    }
}

/// Entries of `M(v)` interpolated as exact quadratics from three samples.
fn quad_fit(f: impl Fn(f64) -> DMatrix<f64>, lo: f64, hi: f64) -> Vec<Vec<Quad>> {
    let (v0, v1, v2) = (lo, 0.5 * (lo + hi), hi);
    let (m0, m1, m2) = (f(v0), f(v1), f(v2));
    let (r, c) = m0.shape();
    let mut out = vec![vec![Quad::default(); c]; r];
    if hi - lo <= 0.0 {
        for i in 0..r {
            for j in 0..c {
                out[i][j] = Quad([m0[(i, j)], 0.0, 0.0]);
            }
        }
        return out;
    }
    for i in 0..r {
        for j in 0..c {
            // Newton divided differences
            let (y0, y1, y2) = (m0[(i, j)], m1[(i, j)], m2[(i, j)]);
            let d01 = (y1 - y0) / (v1 - v0);
            let d12 = (y2 - y1) / (v2 - v1);
            let c2 = (d12 - d01) / (v2 - v0);
            let c1 = d01 - c2 * (v0 + v1);
            let c0 = y0 - c1 * v0 - c2 * v0 * v0;
            out[i][j] = Quad([c0, c1, c2]);
        }
    }
    out
}

/// Axis-aligned bound on `w = (A_d(v) − Ā) ξ + (B_d(v) − B̄) u` over `v ∈ [v_min, v_max]`,
/// `ξ ∈ X`, `u ∈ U`.
///
/// `A_d` is affine and `B_d` quadratic in `v`, so each coordinate bound is a sum of
/// absolute values of quadratics; it is maximised exactly over the breakpoints of that
/// piecewise-quadratic function.
pub fn compute_disturbance_set(
    lpv: &LpvVertexSet,
    x_set: &Polytope,
    u_set: &Polytope,
) -> Result<Polytope, ModelError> {
    let (x_lo, x_hi) = x_set.bounding_box()?;
    let (u_lo, u_hi) = u_set.bounding_box()?;
    let (lo, hi) = lpv.v_range;
    let a_bar = lpv.a_bar.clone();
    let b_bar = lpv.b_bar.clone();
    let qa = quad_fit(|v| lpv.model_at(v).a - &a_bar, lo, hi);
    let qb = quad_fit(|v| lpv.model_at(v).b - &b_bar, lo, hi);
    let centre: Vec<f64> = x_lo
        .iter()
        .zip(x_hi.iter())
        .chain(u_lo.iter().zip(u_hi.iter()))
        .map(|(l, h)| 0.5 * (l + h))
        .collect();
    let half: Vec<f64> = x_lo
        .iter()
        .zip(x_hi.iter())
        .chain(u_lo.iter().zip(u_hi.iter()))
        .map(|(l, h)| 0.5 * (h - l))
        .collect();
    let mut w_lo = vec![0.0; NX];
    let mut w_hi = vec![0.0; NX];
    for i in 0..NX {
        let coeffs: Vec<Quad> = qa[i].iter().chain(qb[i].iter()).copied().collect();
        let mut mean = Quad::default();
        for (q, c) in coeffs.iter().zip(&centre) {
            mean.add_scaled(q, *c);
        }
        let mut cands = vec![lo, hi];
        for (q, h) in coeffs.iter().zip(&half) {
            if *h > 0.0 {
                q.roots_in(lo, hi, &mut cands);
            }
        }
        cands.sort_by(f64::total_cmp);
        cands.dedup();
        let spread = |v: f64| -> f64 {
            coeffs
                .iter()
                .zip(&half)
                .map(|(q, h)| q.eval(v).abs() * h)
                .sum()
        };
        let mut points = cands.clone();
        for pair in cands.windows(2) {
            let mid = 0.5 * (pair[0] + pair[1]);
            // on each piece the signs are fixed, so upper/lower envelopes are quadratics
            let mut upper = mean;
            let mut lower = mean;
            for (q, h) in coeffs.iter().zip(&half) {
                let s = q.eval(mid).signum() * h;
                upper.add_scaled(q, s);
                lower.add_scaled(q, -s);
            }
            for st in [upper.stationary(), lower.stationary()].into_iter().flatten() {
                if st > pair[0] && st < pair[1] {
                    points.push(st);
                }
            }
        }
        let mut top = f64::NEG_INFINITY;
        let mut bottom = f64::INFINITY;
        for v in points {
            let m = mean.eval(v);
            let s = spread(v);
            top = top.max(m + s);
            bottom = bottom.min(m - s);
        }
        // the origin belongs to W (v at the average reproduces Ā, B̄ only approximately)
        w_lo[i] = bottom.min(0.0);
        w_hi[i] = top.max(0.0);
    }
    Ok(Polytope::from_box(&w_lo, &w_hi)?)
}
