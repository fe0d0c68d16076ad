//! Low-level stabiliser: speed-tracking torque, desired CG forces and a Jacobian-weighted
//! tire-force correction realised as per-wheel torque.
//!
//! Wheel order everywhere is front-left, front-right, rear-left, rear-right.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::models::VehicleParams;

pub const GRAVITY: f64 = 9.81;

/// Longitudinal and lateral force of each tire in its wheel frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TireForceState {
    pub f_x: [f64; 4],
    pub f_y: [f64; 4],
}

impl TireForceState {
    /// `[f_x1..f_x4, f_y1..f_y4]`.
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(8, self.f_x.iter().chain(self.f_y.iter()).copied())
    }
}

/// Resultant force and yaw moment at the centre of gravity, body frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CgForces {
    pub f_x: f64,
    pub f_y: f64,
    pub g_z: f64,
}

impl CgForces {
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.f_x, self.f_y, self.g_z])
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            f_x: v[0],
            f_y: v[1],
            g_z: v[2],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CgForceTarget {
    pub f_x_des: f64,
    pub f_y_des: f64,
    pub g_z_des: f64,
}

impl CgForceTarget {
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.f_x_des, self.f_y_des, self.g_z_des])
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TorqueCommand {
    pub t: [f64; 4],
    pub t_ff_total: f64,
    pub delta_t: [f64; 4],
}

impl TorqueCommand {
    /// Equal split of a total torque, no correction.
    pub fn uniform(total: f64) -> Self {
        Self {
            t: [total / 4.0; 4],
            t_ff_total: total,
            delta_t: [0.0; 4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationWeights {
    /// Diagonal of `W_E` on `(F_x, F_y, G_z)`.
    pub w_e: [f64; 3],
    /// `W_f = w_f · I`.
    pub w_f: f64,
    /// `W_δf = w_df · I`.
    pub w_df: f64,
}

impl Default for AllocationWeights {
    fn default() -> Self {
        Self {
            w_e: [1.0, 1.0, 10.0],
            w_f: 1e-4,
            w_df: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvConfig {
    /// Speed-loop gain in N·m per m/s of total wheel torque.
    pub k_p: f64,
    /// Yaw-moment gain of the command interpreter.
    pub k_r: f64,
    pub weights: AllocationWeights,
    pub torque_limit: f64,
}

impl Default for TvConfig {
    fn default() -> Self {
        Self {
            k_p: 4500.0,
            k_r: 1.0,
            weights: AllocationWeights::default(),
            torque_limit: 1500.0,
        }
    }
}

/// Per-wheel share of `K_p (v* − v)`, with the total as second value.
pub fn feedforward_torque(v_star: f64, v_meas: f64, k_p: f64) -> ([f64; 4], f64) {
    let total = k_p * (v_star - v_meas);
    ([total / 4.0; 4], total)
}

/// Simplified command interpreter.
#[allow(clippy::too_many_arguments)]
pub fn desired_cg_forces(
    delta_star: f64,
    a_x_cmd: f64,
    v_x: f64,
    r_meas: f64,
    mu: f64,
    params: &VehicleParams,
    k_r: f64,
) -> CgForceTarget {
    let r_des = if v_x < 0.5 {
        0.0
    } else {
        let limit = mu * GRAVITY / v_x;
        (v_x * delta_star / params.wheelbase()).clamp(-limit, limit)
    };
    CgForceTarget {
        f_x_des: params.mass * a_x_cmd,
        f_y_des: params.mass * v_x * r_des,
        g_z_des: k_r * params.i_z * (r_des - r_meas) / params.t_s,
    }
}

/// Wheel contact positions `(x, y)` in the body frame.
pub fn wheel_positions(params: &VehicleParams) -> [(f64, f64); 4] {
    let h = 0.5 * params.track_width;
    [
        (params.l_f, h),
        (params.l_f, -h),
        (-params.l_r, h),
        (-params.l_r, -h),
    ]
}

pub fn steer_angles(delta: f64) -> [f64; 4] {
    [delta, delta, 0.0, 0.0]
}

/// `∂(F_x, F_y, G_z) / ∂(f_x1..f_x4, f_y1..f_y4)`; the map is linear in the tire forces.
pub fn force_jacobian(delta: f64, params: &VehicleParams) -> DMatrix<f64> {
    let pos = wheel_positions(params);
    let steer = steer_angles(delta);
    let mut j = DMatrix::zeros(3, 8);
    for i in 0..4 {
        let (s, c) = steer[i].sin_cos();
        let (px, py) = pos[i];
        // body force from f_x: (c, s); from f_y: (−s, c); moment x F_by − y F_bx
        j[(0, i)] = c;
        j[(1, i)] = s;
        j[(2, i)] = px * s - py * c;
        j[(0, 4 + i)] = -s;
        j[(1, 4 + i)] = c;
        j[(2, 4 + i)] = px * c + py * s;
    }
    j
}

pub fn cg_forces(f: &TireForceState, delta: f64, params: &VehicleParams) -> CgForces {
    let v = force_jacobian(delta, params) * f.to_vector();
    CgForces::from_slice(v.as_slice())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub theta_f: [f64; 8],
    pub delta_t: [f64; 4],
    /// Infinity norm of the normal-equation residual.
    pub residual: f64,
    pub error: [f64; 3],
}

/// `θf = [W_δf + W_f + ∇Fᵀ W_E ∇F]⁻¹ [∇Fᵀ W_E E − W_f f]` with `E = F_des − F`.
/// Only the longitudinal components are actuated: `δT_i = R_eff θf_x,i`.
pub fn allocate(
    f: &TireForceState,
    target: &CgForceTarget,
    measured: &CgForces,
    weights: &AllocationWeights,
    jacobian: &DMatrix<f64>,
    r_eff: f64,
) -> Allocation {
    let e = target.to_vector() - measured.to_vector();
    let w_e = DMatrix::from_diagonal(&DVector::from_column_slice(&weights.w_e));
    let lhs = DMatrix::identity(8, 8) * (weights.w_df + weights.w_f)
        + jacobian.transpose() * &w_e * jacobian;
    let rhs = jacobian.transpose() * &w_e * &e - f.to_vector() * weights.w_f;
    let theta = match lhs.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => {
            log::warn!("allocation system is singular; no correction applied");
            DVector::zeros(8)
        }
    };
    let residual = (&lhs * &theta - &rhs).amax();
    let mut out = Allocation {
        residual,
        error: [e[0], e[1], e[2]],
        ..Default::default()
    };
    for i in 0..8 {
        out.theta_f[i] = theta[i];
    }
    for i in 0..4 {
        out.delta_t[i] = r_eff * theta[i];
    }
    out
}

/// Yaw moment produced by longitudinal corrective torques.
pub fn net_yaw_moment(delta_t: &[f64; 4], delta: f64, params: &VehicleParams) -> f64 {
    let j = force_jacobian(delta, params);
    (0..4)
        .map(|i| j[(2, i)] * delta_t[i] / params.wheel_radius_eff)
        .sum()
}

/// Inputs of one torque-vectoring step.
#[derive(Debug, Clone, Copy)]
pub struct TvInput {
    pub delta_star: f64,
    pub v_star: f64,
    pub v_x: f64,
    pub yaw_rate: f64,
    pub mu: f64,
    pub tires: TireForceState,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TvOutput {
    pub command: TorqueCommand,
    pub target: CgForceTarget,
    pub allocation: Allocation,
    pub net_yaw_moment: f64,
}

/// Stateful wrapper remembering the torques applied in the previous step.
#[derive(Debug, Clone)]
pub struct TorqueVectoring {
    pub cfg: TvConfig,
    params: VehicleParams,
    last: [f64; 4],
}

impl TorqueVectoring {
    pub fn new(cfg: TvConfig, params: VehicleParams) -> Self {
        Self {
            cfg,
            params,
            last: [0.0; 4],
        }
    }

    /// Sets the torques assumed to be acting before the first command.
    pub fn prime(&mut self, torques: [f64; 4]) {
        self.last = torques;
    }

    pub fn step(&mut self, inp: &TvInput) -> TvOutput {
        let p = &self.params;
        let r_eff = p.wheel_radius_eff;
        let (t_ff, total) = feedforward_torque(inp.v_star, inp.v_x, self.cfg.k_p);
        let a_cmd = total / (r_eff * p.mass);
        let target = desired_cg_forces(inp.delta_star, a_cmd, inp.v_x, inp.yaw_rate, inp.mu, p, self.cfg.k_r);
        // Forces that the feed-forward torque alone would produce: the previous
        // corrections are removed so the allocation returns a full correction, not an increment.
        let mut base = inp.tires;
        for i in 0..4 {
            base.f_x[i] += (t_ff[i] - self.last[i]) / r_eff;
        }
        let jac = force_jacobian(inp.delta_star, p);
        let measured = cg_forces(&base, inp.delta_star, p);
        let allocation = allocate(&base, &target, &measured, &self.cfg.weights, &jac, r_eff);
        let lim = self.cfg.torque_limit;
        let mut t = [0.0; 4];
        let mut delta_t = [0.0; 4];
        for i in 0..4 {
            t[i] = (t_ff[i] + allocation.delta_t[i]).clamp(-lim, lim);
            delta_t[i] = t[i] - t_ff[i];
        }
        self.last = t;
        TvOutput {
            command: TorqueCommand {
                t,
                t_ff_total: total,
                delta_t,
            },
            target,
            allocation,
            net_yaw_moment: net_yaw_moment(&delta_t, inp.delta_star, p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feedforward_split() {
        let (w, total) = feedforward_torque(22.0, 20.0, 1000.0);
        assert_eq!(total, 2000.0);
        assert!(w.iter().all(|t| *t == 500.0));
        assert!(feedforward_torque(18.0, 20.0, 1000.0).1 < 0.0);
        assert_eq!(feedforward_torque(20.0, 20.0, 1000.0).1, 0.0);
    }

    #[test]
    fn yaw_target_before_clamp() {
        let p = VehicleParams {
            l_f: 1.32,
            l_r: 1.32,
            ..VehicleParams::default()
        };
        let t = desired_cg_forces(0.05, 0.0, 20.0, 0.0, 10.0, &p, 1.0);
        let r = t.f_y_des / (p.mass * 20.0);
        assert!((r - 20.0 * 0.05 / 2.64).abs() < 1e-12);
    }

    #[test]
    fn straight_driving_has_no_targets() {
        let t = desired_cg_forces(0.0, 0.0, 20.0, 0.0, 1.0, &VehicleParams::default(), 1.0);
        assert_eq!((t.f_x_des, t.f_y_des, t.g_z_des), (0.0, 0.0, 0.0));
    }

    #[test]
    fn yaw_target_clamped() {
        let p = VehicleParams::default();
        let t = desired_cg_forces(0.1, 0.0, 30.0, 0.0, 0.4, &p, 1.0);
        let r = t.f_y_des / (p.mass * 30.0);
        assert!((r - 0.4 * GRAVITY / 30.0).abs() < 1e-12);
    }

    #[test]
    fn no_error_no_correction() {
        let p = VehicleParams::default();
        let jac = force_jacobian(0.02, &p);
        let f = TireForceState {
            f_x: [100.0, 120.0, 90.0, 80.0],
            f_y: [500.0, 510.0, 400.0, 420.0],
        };
        let meas = cg_forces(&f, 0.02, &p);
        let target = CgForceTarget {
            f_x_des: meas.f_x,
            f_y_des: meas.f_y,
            g_z_des: meas.g_z,
        };
        let w = AllocationWeights {
            w_f: 0.0,
            ..AllocationWeights::default()
        };
        let a = allocate(&f, &target, &meas, &w, &jac, 0.3);
        assert!(a.theta_f.iter().all(|v| v.abs() < 1e-9));
    }
}
