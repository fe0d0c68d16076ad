//! Convex safe region: virtual straight-road edges plus one collision-avoidance halfspace.

use serde::{Deserialize, Serialize};

use crate::error::ConstraintError;
use crate::geometry::{intersect_line_circle, Circle, Halfspace, Point2, Sense};
use crate::models::KinematicState;
use crate::reference_path::{Projection, RoadPath};

/// Lateral road-edge positions relative to the reference line (left positive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadEdges {
    pub left: f64,
    pub right: f64,
}

impl Default for RoadEdges {
    /// Two lanes of 5 m with the reference on the centre of the right lane.
    fn default() -> Self {
        Self {
            left: 7.5,
            right: -2.5,
        }
    }
}

impl RoadEdges {
    pub fn validate(&self) -> Result<(), ConstraintError> {
        if !(self.left > self.right) {
            return Err(ConstraintError::Boundary(format!(
                "left edge {} must lie left of right edge {}",
                self.left, self.right
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadVehicle {
    /// Geometric centre.
    pub pos: Point2,
    pub psi: f64,
    pub l_f: f64,
    pub l_r: f64,
    pub width: f64,
    pub speed: f64,
}

impl LeadVehicle {
    pub fn new(pos: Point2, psi: f64, speed: f64) -> Self {
        Self {
            pos,
            psi,
            l_f: 1.5,
            l_r: 1.7,
            width: 1.8,
            speed,
        }
    }

    pub fn length(&self) -> f64 {
        self.l_f + self.l_r
    }

    pub fn axis(&self) -> Point2 {
        Point2::new(self.psi.cos(), self.psi.sin())
    }

    /// Left-pointing lateral axis.
    pub fn lateral(&self) -> Point2 {
        Point2::new(-self.psi.sin(), self.psi.cos())
    }

    /// Footprint corners, counter-clockwise from rear-right.
    pub fn corners(&self) -> [Point2; 4] {
        rectangle(self.pos, self.psi, 0.5 * self.length(), 0.5 * self.length(), self.width)
    }
}

/// Rectangle with `front`/`rear` extents along `heading` from `reference`.
pub fn rectangle(reference: Point2, heading: f64, front: f64, rear: f64, width: f64) -> [Point2; 4] {
    let t = Point2::new(heading.cos(), heading.sin());
    let n = Point2::new(-heading.sin(), heading.cos());
    let hw = 0.5 * width;
    [
        reference - rear * t - hw * n,
        reference + front * t - hw * n,
        reference + front * t + hw * n,
        reference - rear * t + hw * n,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyEnvelope {
    /// Desired time gap `t` (s).
    pub time_gap: f64,
    /// Lead vehicle length `L_c` (m).
    pub l_c: f64,
    /// Lateral safety radius `W` (m).
    pub w: f64,
}

impl Default for SafetyEnvelope {
    fn default() -> Self {
        Self {
            time_gap: 1.0,
            l_c: 3.2,
            w: 2.5,
        }
    }
}

impl SafetyEnvelope {
    pub fn validate(&self) -> Result<(), ConstraintError> {
        if !(self.time_gap > 0.0) || !(self.l_c > 0.0) || !(self.w > 0.0) {
            return Err(ConstraintError::Envelope(format!(
                "time gap, L_c and W must be positive (got {}, {}, {})",
                self.time_gap, self.l_c, self.w
            )));
        }
        Ok(())
    }

    /// `L_x = v_x t + L_c`.
    pub fn l_x(&self, v_x: f64) -> f64 {
        v_x.max(0.0) * self.time_gap + self.l_c
    }

    /// Smallest `W` for which the lead footprint stays on the unsafe side of FCC/RCC.
    pub fn min_lateral_radius(&self, lead: &LeadVehicle, subject_width: f64) -> f64 {
        0.5 * lead.width + 0.5 * subject_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AvoidanceSide {
    Left,
    Right,
}

impl AvoidanceSide {
    fn sign(self) -> f64 {
        match self {
            AvoidanceSide::Left => 1.0,
            AvoidanceSide::Right => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    None,
    Fcc,
    Rcc,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::None => "NONE",
            Mode::Fcc => "FCC",
            Mode::Rcc => "RCC",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexRegion {
    pub upper: Halfspace,
    pub lower: Halfspace,
    pub collision: Option<Halfspace>,
    pub mode: Mode,
}

impl ConvexRegion {
    pub fn halfspaces(&self) -> Vec<Halfspace> {
        let mut out = vec![self.upper, self.lower];
        out.extend(self.collision);
        out
    }

    /// Smallest signed distance to any active boundary (positive inside).
    pub fn min_margin(&self, p: &Point2) -> f64 {
        self.halfspaces()
            .iter()
            .map(|h| h.margin(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, p: &Point2) -> bool {
        self.halfspaces().iter().all(|h| h.contains(p))
    }
}

/// Point where the line through `pos` perpendicular to `heading` meets the path offset
/// laterally by `offset`.
fn perpendicular_edge_point(
    path: &RoadPath,
    pos: &Point2,
    heading: f64,
    s0: f64,
    offset: f64,
) -> Result<Point2, ConstraintError> {
    let t = Point2::new(heading.cos(), heading.sin());
    let g = |s: f64| (path.offset_point(s, offset) - pos).dot(&t);
    let window = 20.0;
    let (mut lo, mut hi) = (s0 - window, s0 + window);
    let (mut g_lo, g_hi) = (g(lo), g(hi));
    if g_lo.signum() == g_hi.signum() {
        return Err(ConstraintError::Boundary(format!(
            "perpendicular through ({:.2}, {:.2}) misses the edge at offset {offset} within ±{window} m",
            pos.x, pos.y
        )));
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let g_mid = g(mid);
        if g_mid == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if g_mid.signum() == g_lo.signum() {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-11 {
            break;
        }
    }
    Ok(path.offset_point(0.5 * (lo + hi), offset))
}

/// Upper (left) and lower (right) edges of the virtual straight road at the subject.
///
/// Each edge is the line with heading `ψ_ref` through the point where the perpendicular
/// to the subject's longitudinal axis meets the true road edge. Both halfspaces are
/// oriented so the centreline point at the subject's projection is inside.
pub fn build_boundary_halfspaces(
    path: &RoadPath,
    subject: &KinematicState,
    proj: &Projection,
    edges: &RoadEdges,
) -> Result<(Halfspace, Halfspace), ConstraintError> {
    edges.validate()?;
    let pos = Point2::new(subject.x, subject.y);
    let centre = path.pose_at(proj.s).point();
    let p1 = perpendicular_edge_point(path, &pos, subject.psi, proj.s, edges.left)?;
    let p2 = perpendicular_edge_point(path, &pos, subject.psi, proj.s, edges.right)?;
    let upper = Halfspace::through_point_with_heading(p1, proj.psi_ref, Sense::Le)?
        .oriented_to_contain(&centre);
    let lower = Halfspace::through_point_with_heading(p2, proj.psi_ref, Sense::Ge)?
        .oriented_to_contain(&centre);
    Ok((upper, lower))
}

/// Intersection points used by the collision constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionPoints {
    /// On the lead's longitudinal axis at distance `L_x + l_rL`.
    pub p3: Point2,
    /// On the lead's lateral axis at distance `W`.
    pub p4: Point2,
}

fn collision_points(
    lead: &LeadVehicle,
    env: &SafetyEnvelope,
    subject_speed: f64,
    side: AvoidanceSide,
    forward: bool,
) -> Result<CollisionPoints, ConstraintError> {
    env.validate()?;
    let axis = Halfspace::through_point_with_heading(lead.pos, lead.psi, Sense::Le)?;
    let lateral =
        Halfspace::through_point_with_heading(lead.pos, lead.psi + std::f64::consts::FRAC_PI_2, Sense::Le)?;
    let r3 = env.l_x(subject_speed) + lead.l_r;
    let lon = intersect_line_circle(&axis, &Circle::new(lead.pos, r3)?);
    let lat = intersect_line_circle(&lateral, &Circle::new(lead.pos, env.w)?);
    let t = lead.axis();
    let n = lead.lateral() * side.sign();
    let pick = |pts: &[Point2], dir: Point2| {
        pts.iter()
            .copied()
            .max_by(|a, b| (a - lead.pos).dot(&dir).total_cmp(&(b - lead.pos).dot(&dir)))
    };
    let p3 = pick(&lon, if forward { t } else { -t }).ok_or(ConstraintError::DegenerateCollisionLine)?;
    let p4 = pick(&lat, n).ok_or(ConstraintError::DegenerateCollisionLine)?;
    if (p3 - p4).norm() < 1e-9 {
        return Err(ConstraintError::DegenerateCollisionLine);
    }
    Ok(CollisionPoints { p3, p4 })
}

fn collision_halfspace(
    lead: &LeadVehicle,
    pts: &CollisionPoints,
) -> Result<Halfspace, ConstraintError> {
    let line = Halfspace::through_points(pts.p3, pts.p4, Sense::Ge)?;
    // the lead's centre anchors the unsafe side
    Ok(line.oriented_to_exclude(&lead.pos).normalized())
}

/// Forward collision constraint: line through the rear axis point `P3` and the lateral point `P4`.
pub fn build_fcc(
    lead: &LeadVehicle,
    env: &SafetyEnvelope,
    subject: &KinematicState,
    side: AvoidanceSide,
) -> Result<(Halfspace, CollisionPoints), ConstraintError> {
    let pts = collision_points(lead, env, subject.v_x, side, false)?;
    Ok((collision_halfspace(lead, &pts)?, pts))
}

/// Rear collision constraint: the mirror of [`build_fcc`] through the forward axis point.
pub fn build_rcc(
    lead: &LeadVehicle,
    env: &SafetyEnvelope,
    subject: &KinematicState,
    side: AvoidanceSide,
) -> Result<(Halfspace, CollisionPoints), ConstraintError> {
    let pts = collision_points(lead, env, subject.v_x, side, true)?;
    Ok((collision_halfspace(lead, &pts)?, pts))
}

/// FCC → RCC → NONE switching with a latch on manoeuvre completion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSelector {
    /// Lateral offset below which the return to the original lane counts as complete.
    pub return_threshold: f64,
    completed: bool,
}

impl Default for ModeSelector {
    fn default() -> Self {
        Self::new(0.2)
    }
}

impl ModeSelector {
    pub fn new(return_threshold: f64) -> Self {
        Self {
            return_threshold,
            completed: false,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.completed
    }

    /// `s_subject`, `s_lead` are arc lengths; `e_y` is the subject's offset from its lane centre.
    pub fn select(&mut self, s_subject: f64, s_lead: f64, e_y: f64, l_x: f64) -> Mode {
        if self.completed {
            return Mode::None;
        }
        if s_subject < s_lead {
            return Mode::Fcc;
        }
        if s_subject - s_lead > l_x && e_y.abs() < self.return_threshold {
            self.completed = true;
            return Mode::None;
        }
        Mode::Rcc
    }
}

/// Per-step region construction shared by all planners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionBuilder {
    pub edges: RoadEdges,
    pub envelope: SafetyEnvelope,
    pub side: AvoidanceSide,
}

impl Default for RegionBuilder {
    fn default() -> Self {
        Self {
            edges: RoadEdges::default(),
            envelope: SafetyEnvelope::default(),
            side: AvoidanceSide::Left,
        }
    }
}

impl RegionBuilder {
    pub fn build(
        &self,
        path: &RoadPath,
        subject: &KinematicState,
        proj: &Projection,
        lead: Option<&LeadVehicle>,
        mode: Mode,
    ) -> Result<ConvexRegion, ConstraintError> {
        let (upper, lower) = build_boundary_halfspaces(path, subject, proj, &self.edges)?;
        let collision = match (mode, lead) {
            (Mode::Fcc, Some(l)) => Some(build_fcc(l, &self.envelope, subject, self.side)?.0),
            (Mode::Rcc, Some(l)) => Some(build_rcc(l, &self.envelope, subject, self.side)?.0),
            _ => None,
        };
        Ok(ConvexRegion {
            upper,
            lower,
            collision,
            mode,
        })
    }
}
