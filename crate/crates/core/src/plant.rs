//! Double-track vehicle used as the closed-loop truth model.
//!
//! Rigid body in the plane with four independently driven wheels, front steering,
//! static axle loads and a magic-formula tire whose combined-slip force is scaled onto
//! the friction circle.

use serde::{Deserialize, Serialize};

use crate::error::PlantError;
use crate::models::{KinematicState, VehicleParams};
use crate::torque_vectoring::{cg_forces, steer_angles, wheel_positions, CgForces, TireForceState, GRAVITY};

/// Largest integration step accepted by [`step`].
pub const MAX_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub mu: f64,
}

impl Surface {
    pub fn new(mu: f64) -> Result<Self, PlantError> {
        if !(mu > 0.0 && mu <= 1.2) {
            return Err(PlantError::Param(format!("friction coefficient {mu} outside (0, 1.2]")));
        }
        Ok(Self { mu })
    }
}

impl Default for Surface {
    fn default() -> Self {
        Self { mu: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TireParams {
    pub b: f64,
    pub c: f64,
    /// Speed below which slip is computed against this floor instead of the wheel speed.
    pub slip_speed_floor: f64,
}

impl Default for TireParams {
    fn default() -> Self {
        Self {
            b: 10.0,
            c: 1.9,
            slip_speed_floor: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    pub vehicle: VehicleParams,
    pub tire: TireParams,
    pub wheel_inertia: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            vehicle: VehicleParams::default(),
            tire: TireParams::default(),
            wheel_inertia: 1.2,
        }
    }
}

impl PlantParams {
    /// Static vertical load on each wheel.
    pub fn wheel_loads(&self) -> [f64; 4] {
        let v = &self.vehicle;
        let l = v.wheelbase();
        let front = 0.5 * v.mass * GRAVITY * v.l_r / l;
        let rear = 0.5 * v.mass * GRAVITY * v.l_f / l;
        [front, front, rear, rear]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub v_x: f64,
    pub v_y: f64,
    pub r: f64,
    pub omega: [f64; 4],
}

impl PlantState {
    /// Free rolling at speed `v` along heading `psi`.
    pub fn rolling(x: f64, y: f64, psi: f64, v: f64, params: &PlantParams) -> Self {
        let w = v / params.vehicle.wheel_radius_eff;
        Self {
            x,
            y,
            psi,
            v_x: v,
            v_y: 0.0,
            r: 0.0,
            omega: [w; 4],
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.psi, self.v_x, self.v_y, self.r]
            .iter()
            .chain(self.omega.iter())
            .all(|v| v.is_finite())
    }

    /// Kinetic energy of body and wheels.
    pub fn energy(&self, params: &PlantParams) -> f64 {
        let v = &params.vehicle;
        0.5 * v.mass * (self.v_x * self.v_x + self.v_y * self.v_y)
            + 0.5 * v.i_z * self.r * self.r
            + self.omega.iter().map(|w| 0.5 * params.wheel_inertia * w * w).sum::<f64>()
    }

    fn to_array(self) -> [f64; 10] {
        let o = self.omega;
        [self.x, self.y, self.psi, self.v_x, self.v_y, self.r, o[0], o[1], o[2], o[3]]
    }

    fn from_array(a: &[f64; 10]) -> Self {
        Self {
            x: a[0],
            y: a[1],
            psi: a[2],
            v_x: a[3],
            v_y: a[4],
            r: a[5],
            omega: [a[6], a[7], a[8], a[9]],
        }
    }
}

/// Tire forces in the wheel frames.
pub fn tire_forces(state: &PlantState, steering: f64, surface: &Surface, params: &PlantParams) -> TireForceState {
    let pos = wheel_positions(&params.vehicle);
    let steer = steer_angles(steering);
    let loads = params.wheel_loads();
    let tp = &params.tire;
    let r_eff = params.vehicle.wheel_radius_eff;
    let mut out = TireForceState::default();
    for i in 0..4 {
        let (px, py) = pos[i];
        let vx = state.v_x - state.r * py;
        let vy = state.v_y + state.r * px;
        let (s, c) = steer[i].sin_cos();
        let vwx = c * vx + s * vy;
        let vwy = -s * vx + c * vy;
        let denom = vwx.abs().max(tp.slip_speed_floor);
        let kappa = (state.omega[i] * r_eff - vwx) / denom;
        let alpha = -vwy.atan2(denom);
        let sigma = kappa.hypot(alpha);
        if sigma < 1e-12 {
            continue;
        }
        let f = surface.mu * loads[i] * (tp.c * (tp.b * sigma).atan()).sin();
        out.f_x[i] = f * kappa / sigma;
        out.f_y[i] = f * alpha / sigma;
    }
    out
}

fn derivative(
    s: &[f64; 10],
    steering: f64,
    torques: &[f64; 4],
    surface: &Surface,
    params: &PlantParams,
) -> [f64; 10] {
    let st = PlantState::from_array(s);
    let v = &params.vehicle;
    let f = tire_forces(&st, steering, surface, params);
    let cg = cg_forces(&f, steering, v);
    let (sp, cp) = st.psi.sin_cos();
    let mut d = [0.0; 10];
    d[0] = st.v_x * cp - st.v_y * sp;
    d[1] = st.v_x * sp + st.v_y * cp;
    d[2] = st.r;
    d[3] = cg.f_x / v.mass + st.v_y * st.r;
    d[4] = cg.f_y / v.mass - st.v_x * st.r;
    d[5] = cg.g_z / v.i_z;
    for i in 0..4 {
        d[6 + i] = (torques[i] - f.f_x[i] * v.wheel_radius_eff) / params.wheel_inertia;
    }
    d
}

/// One classical Runge–Kutta step of length `dt ≤ 1e-3` s.
pub fn step(
    state: &PlantState,
    steering: f64,
    torques: &[f64; 4],
    surface: &Surface,
    params: &PlantParams,
    dt: f64,
) -> Result<PlantState, PlantError> {
    if !(dt > 0.0 && dt <= MAX_STEP * (1.0 + 1e-12)) {
        return Err(PlantError::Param(format!("integration step {dt} outside (0, {MAX_STEP}]")));
    }
    let y0 = state.to_array();
    let add = |a: &[f64; 10], k: &[f64; 10], h: f64| {
        let mut o = *a;
        for i in 0..10 {
            o[i] += h * k[i];
        }
        o
    };
    let k1 = derivative(&y0, steering, torques, surface, params);
    let k2 = derivative(&add(&y0, &k1, 0.5 * dt), steering, torques, surface, params);
    let k3 = derivative(&add(&y0, &k2, 0.5 * dt), steering, torques, surface, params);
    let k4 = derivative(&add(&y0, &k3, dt), steering, torques, surface, params);
    let mut y = y0;
    for i in 0..10 {
        y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    let next = PlantState::from_array(&y);
    if !next.is_finite() {
        return Err(PlantError::Divergence { t: f64::NAN });
    }
    Ok(next)
}

/// Noise-free measurements derived from the plant state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub kinematic: KinematicState,
    pub tires: TireForceState,
    pub cg: CgForces,
    pub yaw_rate: f64,
    pub v_y: f64,
}

pub fn measure(state: &PlantState, steering: f64, surface: &Surface, params: &PlantParams) -> Measurement {
    let tires = tire_forces(state, steering, surface, params);
    Measurement {
        kinematic: KinematicState::new(state.x, state.y, state.v_x, state.psi),
        cg: cg_forces(&tires, steering, &params.vehicle),
        tires,
        yaw_rate: state.r,
        v_y: state.v_y,
    }
}

/// Plant with fixed parameters and surface, sub-stepped over a sampling interval.
#[derive(Debug, Clone, Copy)]
pub struct Plant {
    pub params: PlantParams,
    pub surface: Surface,
    pub dt: f64,
}

impl Plant {
    pub fn new(params: PlantParams, surface: Surface) -> Self {
        Self {
            params,
            surface,
            dt: MAX_STEP,
        }
    }

    /// Hold the inputs for `duration` seconds starting at time `t0`.
    pub fn advance(
        &self,
        state: &PlantState,
        steering: f64,
        torques: &[f64; 4],
        duration: f64,
        t0: f64,
    ) -> Result<PlantState, PlantError> {
        let n = (duration / self.dt).round().max(1.0) as usize;
        let h = duration / n as f64;
        let mut s = *state;
        for i in 0..n {
            s = step(&s, steering, torques, &self.surface, &self.params, h).map_err(|e| match e {
                PlantError::Divergence { .. } => PlantError::Divergence { t: t0 + (i + 1) as f64 * h },
                other => other,
            })?;
            if s.v_x.abs() > 150.0 || s.r.abs() > 20.0 {
                return Err(PlantError::Divergence { t: t0 + (i + 1) as f64 * h });
            }
        }
        Ok(s)
    }

    pub fn measure(&self, state: &PlantState, steering: f64) -> Measurement {
        measure(state, steering, &self.surface, &self.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_symmetry() {
        let p = PlantParams::default();
        let plant = Plant::new(p, Surface::default());
        let mut s = PlantState::rolling(0.0, 0.0, 0.0, 20.0, &p);
        for k in 0..20 {
            s = plant.advance(&s, 0.0, &[200.0; 4], 0.1, k as f64 * 0.1).unwrap();
        }
        assert_eq!((s.y, s.v_y, s.r), (0.0, 0.0, 0.0));
        assert!(s.v_x > 20.0);
    }

    #[test]
    fn coastdown_does_not_speed_up() {
        let p = PlantParams::default();
        let plant = Plant::new(p, Surface::default());
        let mut s = PlantState::rolling(0.0, 0.0, 0.0, 20.0, &p);
        s.omega = [60.0; 4];
        let mut last = s.v_x;
        for k in 0..30 {
            s = plant.advance(&s, 0.0, &[0.0; 4], 0.1, k as f64 * 0.1).unwrap();
            assert!(s.v_x <= last + 1e-12);
            last = s.v_x;
        }
    }

    #[test]
    fn at_rest_no_forces() {
        let p = PlantParams::default();
        let m = measure(&PlantState::default(), 0.0, &Surface::default(), &p);
        assert_eq!(m.cg, CgForces::default());
    }

    #[test]
    fn rejects_large_step() {
        let p = PlantParams::default();
        assert!(step(&PlantState::default(), 0.0, &[0.0; 4], &Surface::default(), &p, 2e-3).is_err());
    }

    #[test]
    fn surface_range() {
        assert!(Surface::new(0.0).is_err());
        assert!(Surface::new(1.3).is_err());
        assert!(Surface::new(0.4).is_ok());
    }
}
