//! Planar primitives and convex-set algebra.
//!
//! [`Halfspace`] and [`Circle`] carry the road-boundary and collision-avoidance
//! construction; [`Polytope`] carries the n-dimensional set algebra needed by
//! the tube planner.

mod hull;
mod mrpi;
mod polytope;

pub use hull::convex_hull_2d;
pub use mrpi::{compute_mrpi, is_robust_invariant, spectral_radius, MrpiResult};
pub use polytope::{HRep, Polytope, Zonotope};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::tol;

pub type Point2 = Vector2<f64>;

/// Which side of `a·x + b·y + c = 0` the halfspace keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    /// `a·x + b·y + c ≤ 0`
    Le,
    /// `a·x + b·y + c ≥ 0`
    Ge,
}

impl Sense {
    pub fn flipped(self) -> Self {
        match self {
            Sense::Le => Sense::Ge,
            Sense::Ge => Sense::Le,
        }
    }
}

/// Planar halfspace `a·x + b·y + c ⋚ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub sense: Sense,
}

impl Halfspace {
    pub fn new(a: f64, b: f64, c: f64, sense: Sense) -> Result<Self, GeometryError> {
        if a == 0.0 && b == 0.0 || !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(GeometryError::DegenerateLine);
        }
        Ok(Self { a, b, c, sense })
    }

    /// Line through `p` and `q`; `sense` is applied to the left-normal form
    /// `(q − p) × (x − p)`, so `Ge` keeps points left of the direction `p → q`.
    pub fn through_points(p: Point2, q: Point2, sense: Sense) -> Result<Self, GeometryError> {
        let d = q - p;
        // (q - p) x (x - p) = d.x (y - p.y) - d.y (x - p.x)
        Self::new(-d.y, d.x, d.y * p.x - d.x * p.y, sense)
    }

    /// Line through `p` with direction angle `heading`.
    pub fn through_point_with_heading(
        p: Point2,
        heading: f64,
        sense: Sense,
    ) -> Result<Self, GeometryError> {
        let q = p + Point2::new(heading.cos(), heading.sin());
        Self::through_points(p, q, sense)
    }

    /// Raw value of `a·x + b·y + c`.
    pub fn value(&self, p: &Point2) -> f64 {
        self.a * p.x + self.b * p.y + self.c
    }

    pub fn normal_norm(&self) -> f64 {
        self.a.hypot(self.b)
    }

    /// Signed Euclidean distance to the boundary, positive inside.
    pub fn margin(&self, p: &Point2) -> f64 {
        let v = self.value(p) / self.normal_norm();
        match self.sense {
            Sense::Le => -v,
            Sense::Ge => v,
        }
    }

    pub fn contains(&self, p: &Point2) -> bool {
        self.margin(p) >= -tol::POINT
    }

    pub fn strictly_contains(&self, p: &Point2) -> bool {
        self.margin(p) > 0.0
    }

    /// Same set with `‖(a, b)‖ = 1`.
    pub fn normalized(&self) -> Self {
        let n = self.normal_norm();
        Self {
            a: self.a / n,
            b: self.b / n,
            c: self.c / n,
            sense: self.sense,
        }
    }

    /// Complementary closed halfspace sharing the boundary line.
    pub fn flipped(&self) -> Self {
        Self {
            sense: self.sense.flipped(),
            ..*self
        }
    }

    /// Orient so that `p` lies on the kept side. Points on the line keep the current sense.
    pub fn oriented_to_contain(&self, p: &Point2) -> Self {
        if self.margin(p) < 0.0 {
            self.flipped()
        } else {
            *self
        }
    }

    /// Orient so that `p` lies on the excluded side.
    pub fn oriented_to_exclude(&self, p: &Point2) -> Self {
        if self.margin(p) > 0.0 {
            self.flipped()
        } else {
            *self
        }
    }

    /// Form `n·x ≤ d` with the outward unit normal `n`.
    pub fn as_le(&self) -> (Point2, f64) {
        let h = self.normalized();
        match h.sense {
            Sense::Le => (Point2::new(h.a, h.b), -h.c),
            Sense::Ge => (Point2::new(-h.a, -h.b), h.c),
        }
    }

    /// Shrink the kept side by `distance` metres (negative values enlarge it).
    pub fn tightened(&self, distance: f64) -> Self {
        let h = self.normalized();
        let c = match h.sense {
            Sense::Le => h.c + distance,
            Sense::Ge => h.c - distance,
        };
        Self { c, ..h }
    }

    /// Closest point of the boundary line to the origin.
    pub fn boundary_point(&self) -> Point2 {
        let n2 = self.a * self.a + self.b * self.b;
        Point2::new(-self.a * self.c / n2, -self.b * self.c / n2)
    }

    /// Unit direction of the boundary line.
    pub fn direction(&self) -> Point2 {
        let n = self.normal_norm();
        Point2::new(-self.b / n, self.a / n)
    }

    /// Slope `dy/dx` of the boundary line (infinite for vertical lines).
    pub fn slope(&self) -> f64 {
        -self.a / self.b
    }

    /// Express the halfspace in a frame whose origin is `origin` and whose
    /// x-axis points along `heading` (global → local).
    pub fn to_local(&self, origin: &Point2, heading: f64) -> Self {
        let (s, c) = heading.sin_cos();
        // global p = origin + R * q, so a·p + c = (Rᵀ n)·q + (n·origin + c)
        let a = self.a * c + self.b * s;
        let b = -self.a * s + self.b * c;
        let off = self.a * origin.x + self.b * origin.y + self.c;
        Self {
            a,
            b,
            c: off,
            sense: self.sense,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: Point2,
    pub radius: f64,
}

impl Circle {
    pub fn new(center: Point2, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(GeometryError::NonPositiveRadius(radius));
        }
        Ok(Self { center, radius })
    }
}

/// Real intersections of the boundary line of `line` with `circle`.
///
/// Two points are returned in order of increasing position along
/// [`Halfspace::direction`]; a tangent line yields one point.
pub fn intersect_line_circle(line: &Halfspace, circle: &Circle) -> Vec<Point2> {
    let n = line.normal_norm();
    let unit_normal = Point2::new(line.a / n, line.b / n);
    let dist = line.value(&circle.center) / n;
    let r = circle.radius;
    if dist.abs() > r * (1.0 + 1e-14) {
        return Vec::new();
    }
    let foot = circle.center - dist * unit_normal;
    let half_chord = (r * r - dist * dist).max(0.0).sqrt();
    if half_chord <= r * 1e-12 {
        return vec![foot];
    }
    let t = line.direction();
    vec![foot - half_chord * t, foot + half_chord * t]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn horizontal(y: f64) -> Halfspace {
        // y - y0 = 0
        Halfspace::new(0.0, 1.0, -y, Sense::Le).unwrap()
    }

    #[test]
    fn rejects_degenerate_line_and_radius() {
        assert_eq!(
            Halfspace::new(0.0, 0.0, 1.0, Sense::Le),
            Err(GeometryError::DegenerateLine)
        );
        assert!(Circle::new(Point2::zeros(), 0.0).is_err());
        assert!(Circle::new(Point2::zeros(), -1.0).is_err());
    }

    #[test]
    fn axis_line_through_circle() {
        let c = Circle::new(Point2::zeros(), 5.0).unwrap();
        let mut pts = intersect_line_circle(&horizontal(0.0), &c);
        pts.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap());
        assert_eq!(pts.len(), 2);
        assert!((pts[0] - Point2::new(-5.0, 0.0)).norm() < 1e-12);
        assert!((pts[1] - Point2::new(5.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn line_misses_circle() {
        let c = Circle::new(Point2::zeros(), 5.0).unwrap();
        assert!(intersect_line_circle(&horizontal(6.0), &c).is_empty());
    }

    #[test]
    fn tangent_line_gives_one_point() {
        let c = Circle::new(Point2::zeros(), 5.0).unwrap();
        let pts = intersect_line_circle(&horizontal(5.0), &c);
        assert_eq!(pts.len(), 1);
        assert!((pts[0] - Point2::new(0.0, 5.0)).norm() < 1e-12);
    }

    #[test]
    fn offset_circle_residual() {
        let c = Circle::new(Point2::new(100.0, 0.0), 20.0).unwrap();
        let mut pts = intersect_line_circle(&horizontal(0.0), &c);
        pts.sort_by(|a, b| b.x.partial_cmp(&a.x).unwrap());
        assert!((pts[0] - Point2::new(120.0, 0.0)).norm() < 1e-9);
        assert!((pts[1] - Point2::new(80.0, 0.0)).norm() < 1e-9);
        for p in pts {
            let residual = (p - c.center).norm_squared() - c.radius * c.radius;
            assert!(residual.abs() < 1e-9);
        }
    }

    #[test]
    fn normalisation_preserves_membership() {
        let h = Halfspace::new(3.0, -4.0, 2.0, Sense::Ge).unwrap();
        let n = h.normalized();
        for &(x, y) in &[(0.0, 0.0), (1.0, 2.0), (-3.0, 0.5), (10.0, -7.0)] {
            let p = Point2::new(x, y);
            assert_eq!(h.contains(&p), n.contains(&p));
            assert!((h.margin(&p) - n.margin(&p)).abs() < 1e-12);
        }
    }

    #[test]
    fn through_points_left_side() {
        let h = Halfspace::through_points(Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Sense::Ge)
            .unwrap();
        assert!(h.strictly_contains(&Point2::new(0.5, 1.0)));
        assert!(!h.contains(&Point2::new(0.5, -1.0)));
    }

    #[test]
    fn local_frame_preserves_margin() {
        let h = Halfspace::new(0.3, -1.0, 2.0, Sense::Le).unwrap();
        let origin = Point2::new(4.0, -2.0);
        let heading = 0.7_f64;
        let local = h.to_local(&origin, heading);
        let q = Point2::new(1.5, -0.25);
        let (s, c) = heading.sin_cos();
        let p = origin + Point2::new(c * q.x - s * q.y, s * q.x + c * q.y);
        assert!((h.margin(&p) - local.margin(&q)).abs() < 1e-12);
    }

    #[test]
    fn tightening_moves_boundary_inward() {
        let h = Halfspace::new(0.0, 2.0, -5.0, Sense::Le).unwrap(); // y <= 2.5
        let t = h.tightened(0.5);
        assert!(t.contains(&Point2::new(0.0, 2.0)));
        assert!(!t.contains(&Point2::new(0.0, 2.1)));
    }
}
