use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use super::hull::{facets_of_points, facets_of_zonotope, vertices_of_hrep};
use super::{convex_hull_2d, Point2};
use crate::error::GeometryError;
use crate::tol;

type GResult<T> = Result<T, GeometryError>;

/// Inequality system `a x ≤ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct HRep {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl HRep {
    pub fn len(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.a.nrows() == 0
    }

    /// Largest violation `max_i (a_i x − b_i)` (negative means strictly inside).
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        (&self.a * x - &self.b)
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `center ⊕ generators · [−1, 1]^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Zonotope {
    pub center: DVector<f64>,
    pub generators: DMatrix<f64>,
}

impl Zonotope {
    pub fn new(center: DVector<f64>, generators: DMatrix<f64>) -> GResult<Self> {
        if generators.nrows() != center.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: center.len(),
                found: generators.nrows(),
            });
        }
        Ok(Self { center, generators }.compacted())
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn order(&self) -> usize {
        self.generators.ncols()
    }

    pub fn support(&self, d: &DVector<f64>) -> f64 {
        let spread: f64 = (self.generators.transpose() * d).iter().map(|v| v.abs()).sum();
        d.dot(&self.center) + spread
    }

    /// A point of the zonotope maximising `d·x`; a vertex whenever `Gᵀd` has no zero entries.
    pub fn support_point(&self, d: &DVector<f64>) -> DVector<f64> {
        let signs = (self.generators.transpose() * d).map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        &self.center + &self.generators * signs
    }

    /// Drop zero generators and merge parallel ones, which leaves the set unchanged.
    fn compacted(self) -> Self {
        let gmax = self
            .generators
            .column_iter()
            .fold(0.0_f64, |m, g| m.max(g.norm()));
        let mut kept: Vec<DVector<f64>> = Vec::new();
        for g in self.generators.column_iter() {
            let norm = g.norm();
            if norm <= 1e-15 * gmax || norm == 0.0 {
                continue;
            }
            let g = g.into_owned();
            let parallel = kept.iter_mut().find(|k| {
                let c = k.dot(&g) / (k.norm() * norm);
                c.abs() > 1.0 - 1e-13
            });
            match parallel {
                Some(k) => {
                    if k.dot(&g) >= 0.0 {
                        *k += &g;
                    } else {
                        *k -= &g;
                    }
                }
                None => kept.push(g),
            }
        }
        let generators = if kept.is_empty() {
            DMatrix::zeros(self.center.len(), 0)
        } else {
            DMatrix::from_columns(&kept)
        };
        Self {
            center: self.center,
            generators,
        }
    }
}

/// Bounded or unbounded convex polytope with lazily converted representations.
///
/// Whichever representation the set was built from is authoritative; the
/// others are derived on first use and cached.
#[derive(Debug, Clone)]
pub struct Polytope {
    dim: usize,
    hrep: OnceLock<HRep>,
    vrep: OnceLock<Vec<DVector<f64>>>,
    zono: Option<Zonotope>,
    bounded: bool,
}

impl Polytope {
    fn blank(dim: usize, bounded: bool) -> Self {
        Self {
            dim,
            hrep: OnceLock::new(),
            vrep: OnceLock::new(),
            zono: None,
            bounded,
        }
    }

    /// Axis-aligned box `lo ≤ x ≤ hi`; all three representations are filled in.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> GResult<Self> {
        if lo.len() != hi.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if lo.iter().zip(hi).any(|(l, h)| !(l <= h)) {
            return Err(GeometryError::EmptySet);
        }
        let n = lo.len();
        let center = DVector::from_iterator(n, lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)));
        let half = DMatrix::from_diagonal(&DVector::from_iterator(
            n,
            lo.iter().zip(hi).map(|(l, h)| 0.5 * (h - l)),
        ));
        let mut a = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for i in 0..n {
            a[(2 * i, i)] = 1.0;
            b[2 * i] = hi[i];
            a[(2 * i + 1, i)] = -1.0;
            b[2 * i + 1] = -lo[i];
        }
        let mut verts: Vec<DVector<f64>> = Vec::new();
        for mask in 0..(1usize << n) {
            let v = DVector::from_iterator(
                n,
                (0..n).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }),
            );
            if !verts.iter().any(|w| w == &v) {
                verts.push(v);
            }
        }
        let p = Self {
            zono: Some(Zonotope::new(center, half)?),
            ..Self::blank(n, true)
        };
        let _ = p.hrep.set(HRep { a, b });
        let _ = p.vrep.set(verts);
        Ok(p)
    }

    /// Symmetric box `[−r_i, r_i]`.
    pub fn from_symmetric_box(radii: &[f64]) -> GResult<Self> {
        let lo: Vec<f64> = radii.iter().map(|r| -r).collect();
        Self::from_box(&lo, radii)
    }

    /// `{x : a x ≤ b}`. Boundedness is detected from the row normals.
    pub fn from_hrep(a: DMatrix<f64>, b: DVector<f64>) -> GResult<Self> {
        if a.nrows() != b.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: a.nrows(),
                found: b.len(),
            });
        }
        let p = Self::blank(a.ncols(), false);
        let bounded = is_bounded(&a);
        let p = Self { bounded, ..p };
        let _ = p.hrep.set(HRep { a, b });
        Ok(p)
    }

    /// Convex hull of a finite point set. In the plane the hull is reduced to its vertices.
    pub fn from_vertices(points: Vec<DVector<f64>>) -> GResult<Self> {
        let Some(first) = points.first() else {
            return Err(GeometryError::EmptySet);
        };
        let dim = first.len();
        if let Some(bad) = points.iter().find(|p| p.len() != dim) {
            return Err(GeometryError::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        let verts = if dim == 2 {
            let pts: Vec<Point2> = points.iter().map(|p| Point2::new(p[0], p[1])).collect();
            convex_hull_2d(&pts)
                .into_iter()
                .map(|p| DVector::from_vec(vec![p.x, p.y]))
                .collect()
        } else {
            let mut uniq: Vec<DVector<f64>> = Vec::new();
            for p in points {
                if !uniq.iter().any(|q| (q - &p).amax() <= tol::POINT) {
                    uniq.push(p);
                }
            }
            uniq
        };
        let p = Self::blank(dim, true);
        let _ = p.vrep.set(verts);
        Ok(p)
    }

    pub fn from_points_2d(points: &[Point2]) -> GResult<Self> {
        Self::from_vertices(
            points
                .iter()
                .map(|p| DVector::from_vec(vec![p.x, p.y]))
                .collect(),
        )
    }

    pub fn from_zonotope(z: Zonotope) -> Self {
        Self {
            zono: Some(z.clone()),
            ..Self::blank(z.dim(), true)
        }
    }

    /// The singleton `{0}`.
    pub fn origin(dim: usize) -> Self {
        Self::from_zonotope(Zonotope {
            center: DVector::zeros(dim),
            generators: DMatrix::zeros(dim, 0),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_bounded(&self) -> bool {
        self.bounded
    }

    pub fn zonotope(&self) -> Option<&Zonotope> {
        self.zono.as_ref()
    }

    /// Inequality representation, computed from vertices or generators if needed.
    pub fn hrep(&self) -> GResult<&HRep> {
        if let Some(h) = self.hrep.get() {
            return Ok(h);
        }
        let (a, b) = match &self.zono {
            Some(z) => facets_of_zonotope(&z.center, &z.generators)?,
            None => facets_of_points(self.vertices()?, self.dim)?,
        };
        Ok(self.hrep.get_or_init(|| HRep { a, b }))
    }

    /// Vertices (a superset of the extreme points outside the plane).
    pub fn vertices(&self) -> GResult<&[DVector<f64>]> {
        if let Some(v) = self.vrep.get() {
            return Ok(v);
        }
        if !self.bounded {
            return Err(GeometryError::Unsupported(
                "vertex representation of an unbounded set".into(),
            ));
        }
        let verts = match &self.zono {
            Some(z) if z.order() == 0 => vec![z.center.clone()],
            Some(z) if self.dim == 2 => {
                let pts: Vec<Point2> = zonotope_vertices_2d(z);
                pts.into_iter().map(|p| DVector::from_vec(vec![p.x, p.y])).collect()
            }
            _ => {
                let h = self.hrep()?;
                vertices_of_hrep(&h.a, &h.b)?
            }
        };
        Ok(self.vrep.get_or_init(|| verts))
    }

    /// `max_{x ∈ P} d·x`.
    pub fn support(&self, d: &DVector<f64>) -> GResult<f64> {
        self.check_dim(d.len())?;
        if let Some(z) = &self.zono {
            return Ok(z.support(d));
        }
        let v = self.vertices()?;
        if v.is_empty() {
            return Err(GeometryError::EmptySet);
        }
        Ok(v.iter().map(|p| p.dot(d)).fold(f64::NEG_INFINITY, f64::max))
    }

    /// A maximiser of `d·x` over the set.
    pub fn support_point(&self, d: &DVector<f64>) -> GResult<DVector<f64>> {
        self.check_dim(d.len())?;
        if let Some(z) = &self.zono {
            return Ok(z.support_point(d));
        }
        let v = self.vertices()?;
        v.iter()
            .max_by(|p, q| p.dot(d).total_cmp(&q.dot(d)))
            .cloned()
            .ok_or(GeometryError::EmptySet)
    }

    /// Point membership with absolute tolerance [`tol::POINT`].
    pub fn contains(&self, x: &DVector<f64>) -> GResult<bool> {
        self.contains_with_tol(x, tol::POINT)
    }

    pub fn contains_with_tol(&self, x: &DVector<f64>, abs_tol: f64) -> GResult<bool> {
        self.check_dim(x.len())?;
        Ok(self.hrep()?.max_violation(x) <= abs_tol)
    }

    /// Membership in `scale · P` with a relative tolerance on every facet offset.
    pub fn contains_scaled(&self, x: &DVector<f64>, scale: f64) -> GResult<bool> {
        self.check_dim(x.len())?;
        let h = self.hrep()?;
        let ax = &h.a * x;
        Ok(ax
            .iter()
            .zip(h.b.iter())
            .all(|(l, r)| *l <= scale * r + tol::CONTAINMENT_ABS))
    }

    /// `self ⊆ other` checked through support functions on the facets of `other`.
    pub fn is_subset_of(&self, other: &Polytope, rel_tol: f64) -> GResult<bool> {
        self.check_dim(other.dim)?;
        let h = other.hrep()?;
        for i in 0..h.len() {
            let n = h.a.row(i).transpose();
            let s = self.support(&n)?;
            if s > h.b[i] + rel_tol * h.b[i].abs() + tol::CONTAINMENT_ABS {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn contains_origin(&self) -> GResult<bool> {
        self.contains(&DVector::zeros(self.dim))
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> GResult<(DVector<f64>, DVector<f64>)> {
        let mut lo = DVector::zeros(self.dim);
        let mut hi = DVector::zeros(self.dim);
        for i in 0..self.dim {
            let mut e = DVector::zeros(self.dim);
            e[i] = 1.0;
            hi[i] = self.support(&e)?;
            e[i] = -1.0;
            lo[i] = -self.support(&e)?;
        }
        Ok((lo, hi))
    }

    /// `s · P` for `s ≥ 0`.
    pub fn scaled(&self, s: f64) -> GResult<Polytope> {
        self.linear_map(&(DMatrix::identity(self.dim, self.dim) * s))
    }

    /// `P ⊕ Q`. Zonotopes stay zonotopes; otherwise the hull of pairwise vertex sums.
    pub fn minkowski_sum(&self, other: &Polytope) -> GResult<Polytope> {
        self.check_dim(other.dim)?;
        if let (Some(a), Some(b)) = (&self.zono, &other.zono) {
            let gens = DMatrix::from_fn(self.dim, a.order() + b.order(), |i, j| {
                if j < a.order() {
                    a.generators[(i, j)]
                } else {
                    b.generators[(i, j - a.order())]
                }
            });
            return Ok(Polytope::from_zonotope(Zonotope::new(
                &a.center + &b.center,
                gens,
            )?));
        }
        let va = self.vertices()?;
        let vb = other.vertices()?;
        if va.is_empty() || vb.is_empty() {
            return Err(GeometryError::EmptySet);
        }
        let mut sums = Vec::with_capacity(va.len() * vb.len());
        for p in va {
            for q in vb {
                sums.push(p + q);
            }
        }
        let out = Polytope::from_vertices(sums)?;
        if self.dim > 2 {
            return out.pruned();
        }
        Ok(out)
    }

    /// Image `M P`, mapped vertex-wise (or generator-wise for zonotopes).
    pub fn linear_map(&self, m: &DMatrix<f64>) -> GResult<Polytope> {
        if m.ncols() != self.dim {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim,
                found: m.ncols(),
            });
        }
        if let Some(z) = &self.zono {
            return Ok(Polytope::from_zonotope(Zonotope::new(
                m * &z.center,
                m * &z.generators,
            )?));
        }
        let mapped: Vec<DVector<f64>> = self.vertices()?.iter().map(|v| m * v).collect();
        let out = Polytope::from_vertices(mapped)?;
        if out.dim > 2 {
            return out.pruned();
        }
        Ok(out)
    }

    /// `P ⊖ Q = {x : x + Q ⊆ P}`; `Ok(None)` when the difference is empty.
    ///
    /// `P` must be bounded; every facet offset of `P` is reduced by the support of `Q`
    /// along that facet's normal.
    pub fn pontryagin_diff(&self, q: &Polytope) -> GResult<Option<Polytope>> {
        self.check_dim(q.dim)?;
        let h = self.hrep()?;
        let mut b = h.b.clone();
        for i in 0..h.len() {
            b[i] -= q.support(&h.a.row(i).transpose())?;
        }
        let out = Polytope::from_hrep(h.a.clone(), b)?;
        if out.vertices()?.is_empty() {
            return Ok(None);
        }
        Ok(Some(out))
    }

    /// Drop stored points that are active on fewer than `dim` facets.
    fn pruned(self) -> GResult<Self> {
        let h = self.hrep()?.clone();
        let dim = self.dim;
        let pts = self.vrep.get().cloned().unwrap_or_default();
        let kept: Vec<DVector<f64>> = pts
            .into_iter()
            .filter(|p| {
                let scale = 1.0 + p.amax();
                let active = (&h.a * p - &h.b)
                    .iter()
                    .filter(|v| v.abs() <= 1e-9 * scale)
                    .count();
                active >= dim
            })
            .collect();
        let out = Self::blank(dim, true);
        let _ = out.hrep.set(h);
        let _ = out.vrep.set(kept);
        Ok(out)
    }

    fn check_dim(&self, found: usize) -> GResult<()> {
        if found != self.dim {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim,
                found,
            });
        }
        Ok(())
    }
}

/// Boundedness of `{x : a x ≤ b}`: the origin must lie strictly inside the hull of the rows.
fn is_bounded(a: &DMatrix<f64>) -> bool {
    let n = a.ncols();
    if n == 0 {
        return true;
    }
    if a.nrows() <= n {
        return false;
    }
    let rows: Vec<DVector<f64>> = a
        .row_iter()
        .filter_map(|r| {
            let norm = r.norm();
            (norm > 0.0).then(|| r.transpose() / norm)
        })
        .collect();
    match facets_of_points(&rows, n) {
        Ok((_, b)) => b.iter().all(|&v| v > 1e-12),
        Err(_) => false,
    }
}

fn zonotope_vertices_2d(z: &Zonotope) -> Vec<Point2> {
    let c = Point2::new(z.center[0], z.center[1]);
    let mut gens: Vec<Point2> = z
        .generators
        .column_iter()
        .map(|g| {
            let p = Point2::new(g[0], g[1]);
            // orient into the upper half-plane so angular order walks the boundary
            if p.y < 0.0 || (p.y == 0.0 && p.x < 0.0) {
                -p
            } else {
                p
            }
        })
        .collect();
    gens.sort_by(|a, b| a.y.atan2(a.x).total_cmp(&b.y.atan2(b.x)));
    let mut cur = c - gens.iter().fold(Point2::zeros(), |acc, g| acc + g);
    let mut pts = Vec::with_capacity(2 * gens.len());
    for g in &gens {
        pts.push(cur);
        cur += 2.0 * g;
    }
    for g in &gens {
        pts.push(cur);
        cur -= 2.0 * g;
    }
    convex_hull_2d(&pts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn square(r: f64) -> Polytope {
        Polytope::from_symmetric_box(&[r, r]).unwrap()
    }

    fn same_box(p: &Polytope, lo: &[f64], hi: &[f64]) -> bool {
        let (l, h) = p.bounding_box().unwrap();
        (l - v(lo)).amax() < 1e-12 && (h - v(hi)).amax() < 1e-12
    }

    #[test]
    fn support_of_boxes_and_origin() {
        let b = square(1.0);
        assert_eq!(b.support(&v(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(b.support(&v(&[1.0, 1.0])).unwrap(), 2.0);
        assert_eq!(Polytope::origin(2).support(&v(&[3.0, -1.0])).unwrap(), 0.0);
    }

    #[test]
    fn minkowski_of_boxes_and_identity() {
        let s = square(1.0).minkowski_sum(&square(1.0)).unwrap();
        assert!(same_box(&s, &[-2.0, -2.0], &[2.0, 2.0]));
        let t = Polytope::from_points_2d(&[
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ])
        .unwrap();
        let id = t.minkowski_sum(&Polytope::origin(2)).unwrap();
        assert_eq!(id.vertices().unwrap().len(), 3);
    }

    #[test]
    fn triangle_plus_segment() {
        let t = Polytope::from_points_2d(&[
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ])
        .unwrap();
        let seg = Polytope::from_points_2d(&[Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)]).unwrap();
        let s = t.minkowski_sum(&seg).unwrap();
        let mut got: Vec<(f64, f64)> = s.vertices().unwrap().iter().map(|p| (p[0], p[1])).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (2.0, 0.0)]);
    }

    #[test]
    fn pontryagin_examples() {
        let a = Polytope::from_symmetric_box(&[4.0]).unwrap();
        let b = Polytope::from_symmetric_box(&[1.0]).unwrap();
        let d = a.pontryagin_diff(&b).unwrap().unwrap();
        assert!(same_box(&d, &[-3.0], &[3.0]));
        let id = square(1.0).pontryagin_diff(&Polytope::origin(2)).unwrap().unwrap();
        assert!(same_box(&id, &[-1.0, -1.0], &[1.0, 1.0]));
        assert!(square(1.0).pontryagin_diff(&square(2.0)).unwrap().is_none());
    }

    #[test]
    fn linear_map_examples() {
        let b = square(1.0);
        let id = b.linear_map(&DMatrix::identity(2, 2)).unwrap();
        assert!(same_box(&id, &[-1.0, -1.0], &[1.0, 1.0]));
        let z = b.linear_map(&DMatrix::zeros(2, 2)).unwrap();
        assert!(same_box(&z, &[0.0, 0.0], &[0.0, 0.0]));
        let s = b
            .linear_map(&DMatrix::from_diagonal(&v(&[2.0, 0.5])))
            .unwrap();
        assert!(same_box(&s, &[-2.0, -0.5], &[2.0, 0.5]));
    }

    #[test]
    fn four_dimensional_box_conversions() {
        let b = Polytope::from_box(&[-1.0, -2.0, 0.0, -0.1], &[1.0, 2.0, 3.0, 0.1]).unwrap();
        let rotated = b
            .linear_map(&DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.1 * (i + j) as f64 }))
            .unwrap();
        let h = rotated.hrep().unwrap();
        assert_eq!(h.len(), 8);
        for p in b.vertices().unwrap() {
            let m = DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.1 * (i + j) as f64 });
            assert!(rotated.contains(&(m * p)).unwrap());
        }
    }

    #[test]
    fn zonotope_hrep_matches_vertices_in_plane() {
        let z = Zonotope::new(
            v(&[0.5, -1.0]),
            DMatrix::from_column_slice(2, 3, &[1.0, 0.0, 0.5, 0.5, -0.3, 1.0]),
        )
        .unwrap();
        let p = Polytope::from_zonotope(z.clone());
        assert_eq!(p.vertices().unwrap().len(), 6);
        for k in 0..64 {
            let ang = k as f64 * 0.1;
            let d = v(&[ang.cos(), ang.sin()]);
            let via_v = p
                .vertices()
                .unwrap()
                .iter()
                .map(|q| q.dot(&d))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((via_v - z.support(&d)).abs() < 1e-12);
            assert!(p.contains(&z.support_point(&d)).unwrap());
        }
    }

    #[test]
    fn parallel_generators_merge() {
        let z = Zonotope::new(
            v(&[0.0, 0.0]),
            DMatrix::from_column_slice(2, 3, &[1.0, 0.0, -2.0, 0.0, 0.0, 0.0]),
        )
        .unwrap();
        assert_eq!(z.order(), 1);
        assert!((z.support(&v(&[1.0, 0.0])) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn unbounded_hrep_detected() {
        let half = Polytope::from_hrep(DMatrix::from_row_slice(1, 2, &[0.0, 1.0]), v(&[1.0])).unwrap();
        assert!(!half.is_bounded());
        assert!(square(1.0).is_bounded());
        let tri = Polytope::from_hrep(
            DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]),
            v(&[0.0, 0.0, 1.0]),
        )
        .unwrap();
        assert!(tri.is_bounded());
        assert_eq!(tri.vertices().unwrap().len(), 3);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let e = square(1.0).minkowski_sum(&Polytope::origin(3)).unwrap_err();
        assert_eq!(e, GeometryError::DimensionMismatch { expected: 2, found: 3 });
    }
}
