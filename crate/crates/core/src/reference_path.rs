//! Arc-length parameterised road centrelines built from a curvature profile.

use serde::{Deserialize, Serialize};

use crate::error::PathError;
use crate::geometry::Point2;

pub const DEFAULT_STEP: f64 = 0.5;

/// Piecewise-linear curvature `κ(s)` given by breakpoints, held constant outside them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureProfile {
    breakpoints: Vec<(f64, f64)>,
}

impl CurvatureProfile {
    pub fn new(mut breakpoints: Vec<(f64, f64)>) -> Result<Self, PathError> {
        if breakpoints.is_empty() {
            return Err(PathError::InvalidGrid("curvature profile has no breakpoints".into()));
        }
        for &(s, k) in &breakpoints {
            if !k.is_finite() {
                return Err(PathError::NonFiniteCurvature { s });
            }
            if !s.is_finite() {
                return Err(PathError::InvalidGrid(format!("non-finite breakpoint position {s}")));
            }
        }
        breakpoints.sort_by(|a, b| a.0.total_cmp(&b.0));
        if breakpoints.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(PathError::InvalidGrid("duplicate breakpoint positions".into()));
        }
        Ok(Self { breakpoints })
    }

    pub fn constant(kappa: f64) -> Result<Self, PathError> {
        Self::new(vec![(0.0, kappa)])
    }

    /// Constant-radius arc; positive radius turns left, `f64::INFINITY` is straight.
    pub fn from_radius(radius: f64) -> Result<Self, PathError> {
        Self::constant(if radius.is_infinite() { 0.0 } else { 1.0 / radius })
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn eval(&self, s: f64) -> f64 {
        let bp = &self.breakpoints;
        if s <= bp[0].0 {
            return bp[0].1;
        }
        if s >= bp[bp.len() - 1].0 {
            return bp[bp.len() - 1].1;
        }
        let i = bp.partition_point(|p| p.0 <= s) - 1;
        let (s0, k0) = bp[i];
        let (s1, k1) = bp[i + 1];
        k0 + (k1 - k0) * (s - s0) / (s1 - s0)
    }

    /// Exact `∫₀ˢ κ`.
    pub fn integral(&self, s: f64) -> f64 {
        if s < 0.0 {
            return -self.integral_between(s, 0.0);
        }
        self.integral_between(0.0, s)
    }

    fn integral_between(&self, a: f64, b: f64) -> f64 {
        // split [a, b] at breakpoints; κ is linear on each piece so the trapezoid rule is exact
        let mut knots = vec![a];
        knots.extend(self.breakpoints.iter().map(|p| p.0).filter(|&s| s > a && s < b));
        knots.push(b);
        knots
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (self.eval(w[0]) + self.eval(w[1])))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub kappa: f64,
}

impl PathSample {
    pub fn point(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn tangent(&self) -> Point2 {
        Point2::new(self.psi.cos(), self.psi.sin())
    }

    /// Unit normal pointing to the left of the direction of travel.
    pub fn normal(&self) -> Point2 {
        Point2::new(-self.psi.sin(), self.psi.cos())
    }
}

/// Result of projecting a point onto the centreline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub s: f64,
    /// Signed lateral offset, positive to the left of the path.
    pub e_y: f64,
    pub psi_ref: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone)]
pub struct RoadPath {
    samples: Vec<PathSample>,
    profile: CurvatureProfile,
    step: f64,
    pub lane_width: f64,
    pub total_length: f64,
}

/// Three-point Gauss–Legendre nodes and weights on [−1, 1].
const GL3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// Sample the centreline on a uniform grid of spacing `step` (adjusted to divide `length`).
///
/// Heading is the exact integral of the piecewise-linear curvature; positions use
/// composite Simpson quadrature of `(cos ψ, sin ψ)` with the midpoint of each cell.
pub fn build_clothoid_path(
    profile: CurvatureProfile,
    length: f64,
    step: f64,
    lane_width: f64,
) -> Result<RoadPath, PathError> {
    if !(step > 0.0) || !(length > 0.0) || !length.is_finite() {
        return Err(PathError::InvalidGrid(format!(
            "length {length} and step {step} must be positive"
        )));
    }
    if !(lane_width > 0.0) {
        return Err(PathError::InvalidGrid(format!("lane width {lane_width} must be positive")));
    }
    let cells = (length / step).ceil().max(1.0) as usize;
    let h = length / cells as f64;
    let mut samples = Vec::with_capacity(cells + 1);
    let (mut x, mut y) = (0.0, 0.0);
    for i in 0..=cells {
        let s = i as f64 * h;
        if i > 0 {
            let s0 = s - h;
            let (dx, dy) = simpson_cell(&profile, s0, s);
            x += dx;
            y += dy;
        }
        samples.push(PathSample {
            s,
            x,
            y,
            psi: profile.integral(s),
            kappa: profile.eval(s),
        });
    }
    Ok(RoadPath {
        samples,
        profile,
        step: h,
        lane_width,
        total_length: length,
    })
}

fn simpson_cell(profile: &CurvatureProfile, a: f64, b: f64) -> (f64, f64) {
    let m = 0.5 * (a + b);
    let (pa, pm, pb) = (profile.integral(a), profile.integral(m), profile.integral(b));
    let w = (b - a) / 6.0;
    (
        w * (pa.cos() + 4.0 * pm.cos() + pb.cos()),
        w * (pa.sin() + 4.0 * pm.sin() + pb.sin()),
    )
}

impl RoadPath {
    /// Straight road along the x axis.
    pub fn straight(length: f64, lane_width: f64) -> Result<Self, PathError> {
        build_clothoid_path(CurvatureProfile::constant(0.0)?, length, DEFAULT_STEP, lane_width)
    }

    /// Constant-radius arc; negative radius curves right.
    pub fn arc(radius: f64, length: f64, lane_width: f64) -> Result<Self, PathError> {
        build_clothoid_path(CurvatureProfile::from_radius(radius)?, length, DEFAULT_STEP, lane_width)
    }

    pub fn samples(&self) -> &[PathSample] {
        &self.samples
    }

    pub fn profile(&self) -> &CurvatureProfile {
        &self.profile
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn kappa_at(&self, s: f64) -> f64 {
        self.profile.eval(s.clamp(0.0, self.total_length))
    }

    /// Pose at arc length `s`. Outside `[0, L]` the path continues straight along its end tangent.
    pub fn pose_at(&self, s: f64) -> PathSample {
        let last = self.samples[self.samples.len() - 1];
        if s <= 0.0 {
            let first = self.samples[0];
            return PathSample {
                s,
                x: first.x + s * first.psi.cos(),
                y: first.y + s * first.psi.sin(),
                kappa: 0.0,
                ..first
            };
        }
        if s >= self.total_length {
            let d = s - self.total_length;
            return PathSample {
                s,
                x: last.x + d * last.psi.cos(),
                y: last.y + d * last.psi.sin(),
                kappa: 0.0,
                ..last
            };
        }
        let i = ((s / self.step).floor() as usize).min(self.samples.len() - 2);
        let base = self.samples[i];
        let d = s - base.s;
        let (mut dx, mut dy) = (0.0, 0.0);
        if d > 0.0 {
            for (node, weight) in GL3 {
                let t = base.s + 0.5 * d * (node + 1.0);
                let psi = self.profile.integral(t);
                dx += 0.5 * d * weight * psi.cos();
                dy += 0.5 * d * weight * psi.sin();
            }
        }
        PathSample {
            s,
            x: base.x + dx,
            y: base.y + dy,
            psi: self.profile.integral(s),
            kappa: self.profile.eval(s),
        }
    }

    /// Point at lateral `offset` (left positive) from the centreline at `s`.
    pub fn offset_point(&self, s: f64, offset: f64) -> Point2 {
        let p = self.pose_at(s);
        p.point() + offset * p.normal()
    }

    /// Closest centreline point: grid search, then Newton refinement on `(c(s) − p)·t(s) = 0`.
    ///
    /// Equidistant grid candidates resolve to the smallest `s`. Points further than three
    /// lane widths from the path are rejected.
    pub fn project(&self, pos: &Point2) -> Result<Projection, PathError> {
        self.project_in(pos, 0, self.samples.len())
    }

    /// As [`project`](Self::project), searching only grid samples within `window` metres of `s_hint`.
    pub fn project_near(&self, pos: &Point2, s_hint: f64, window: f64) -> Result<Projection, PathError> {
        let lo = ((s_hint - window) / self.step).floor().max(0.0) as usize;
        let hi = (((s_hint + window) / self.step).ceil() as usize + 1).min(self.samples.len());
        if lo >= hi {
            return self.project(pos);
        }
        self.project_in(pos, lo, hi)
    }

    fn project_in(&self, pos: &Point2, lo: usize, hi: usize) -> Result<Projection, PathError> {
        let mut best = lo;
        let mut best_d = f64::INFINITY;
        for (i, smp) in self.samples[lo..hi].iter().enumerate() {
            let d = (smp.point() - pos).norm_squared();
            if d < best_d {
                best_d = d;
                best = lo + i;
            }
        }
        let s_lo = if best == 0 { f64::NEG_INFINITY } else { self.samples[best - 1].s };
        let s_hi = if best + 1 >= self.samples.len() {
            f64::INFINITY
        } else {
            self.samples[best + 1].s
        };
        let mut s = self.samples[best].s;
        for _ in 0..20 {
            let c = self.pose_at(s);
            let r = c.point() - pos;
            let f = r.dot(&c.tangent());
            let df = 1.0 + c.kappa * r.dot(&c.normal());
            if df <= 1e-6 {
                break;
            }
            let next = (s - f / df).clamp(s_lo, s_hi);
            let done = (next - s).abs() < 1e-12;
            s = next;
            if done {
                break;
            }
        }
        let c = self.pose_at(s);
        let e_y = (pos - c.point()).dot(&c.normal());
        let corridor = 3.0 * self.lane_width;
        if e_y.abs() > corridor || (pos - c.point()).norm() > corridor {
            return Err(PathError::Projection {
                x: pos.x,
                y: pos.y,
                offset: e_y,
            });
        }
        Ok(Projection {
            s,
            e_y,
            psi_ref: c.psi,
            kappa: c.kappa,
        })
    }
}
