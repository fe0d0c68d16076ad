//! Hulls and representation conversions.
//!
//! Everything here is brute force over index combinations, which is exact and
//! cheap for the low-dimensional boxes and zonotopes the planners use. Callers
//! get [`GeometryError::Unsupported`] instead of an unbounded computation.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::Point2;
use crate::error::GeometryError;

/// Upper bound on the number of index combinations any routine will visit.
pub(crate) const COMBINATION_LIMIT: u64 = 20_000_000;

/// Counter-clockwise convex hull without collinear points (Andrew's monotone chain).
///
/// Degenerate inputs return the extreme points: one point, or the two ends of a segment.
pub fn convex_hull_2d(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    let scale = pts
        .iter()
        .fold(1.0_f64, |m, p| m.max(p.x.abs()).max(p.y.abs()));
    let eps = 1e-12 * scale;
    pts.dedup_by(|a, b| (*a - *b).amax() <= eps);
    if pts.len() <= 2 {
        return pts;
    }
    let cross = |o: &Point2, a: &Point2, b: &Point2| (a - o).perp(&(b - o));
    let area_eps = 1e-12 * scale * scale;
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for p in &pts {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= area_eps {
            hull.pop();
        }
        hull.push(*p);
    }
    // upper chain walks back without popping into the lower one
    let lower_len = hull.len() + 1;
    for p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len
            && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= area_eps
        {
            hull.pop();
        }
        hull.push(*p);
    }
    hull.pop();
    if hull.len() < 2 {
        // all points collinear and the chain collapsed; fall back to the extremes
        return vec![pts[0], pts[pts.len() - 1]];
    }
    hull
}

pub(crate) fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u64) / (i as u64 + 1);
    }
    acc
}

/// Visit all `k`-subsets of `0..n` in lexicographic order.
pub(crate) fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn check_budget(n: usize, k: usize, what: &str) -> Result<(), GeometryError> {
    let count = binomial(n, k);
    if count > COMBINATION_LIMIT {
        return Err(GeometryError::Unsupported(format!(
            "{what} needs {count} combinations (limit {COMBINATION_LIMIT})"
        )));
    }
    Ok(())
}

/// Rows `a·x ≤ b` with unit normals, deduplicated.
#[derive(Default)]
pub(crate) struct RowSet {
    rows: Vec<(DVector<f64>, f64)>,
    seen: HashMap<Vec<i64>, usize>,
}

impl RowSet {
    pub(crate) fn push(&mut self, normal: DVector<f64>, offset: f64) {
        let norm = normal.norm();
        if !(norm > 0.0) {
            return;
        }
        let n = normal / norm;
        let b = offset / norm;
        let key: Vec<i64> = n.iter().map(|v| (v * 1e9).round() as i64).collect();
        match self.seen.get(&key) {
            // same direction seen before: keep the tighter offset
            Some(&i) => {
                if b < self.rows[i].1 {
                    self.rows[i].1 = b;
                }
            }
            None => {
                self.seen.insert(key, self.rows.len());
                self.rows.push((n, b));
            }
        }
    }

    pub(crate) fn into_matrices(self, dim: usize) -> (DMatrix<f64>, DVector<f64>) {
        let m = self.rows.len();
        let mut a = DMatrix::zeros(m, dim);
        let mut b = DVector::zeros(m);
        for (i, (n, off)) in self.rows.into_iter().enumerate() {
            a.row_mut(i).copy_from(&n.transpose());
            b[i] = off;
        }
        (a, b)
    }
}

/// Orthonormal basis of the span of the columns of `m` (as columns) and its complement.
pub(crate) fn span_basis(m: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if m.ncols() == 0 {
        return (DMatrix::zeros(n, 0), DMatrix::identity(n, n));
    }
    // eigen-decomposition of the Gram matrix m mᵀ gives left singular vectors
    let gram = m * m.transpose();
    let eig = gram.symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let threshold = (rel_tol * rel_tol) * max_ev.max(f64::MIN_POSITIVE);
    let rank = if max_ev <= 0.0 {
        0
    } else {
        order.iter().filter(|&&i| eig.eigenvalues[i] > threshold).count()
    };
    let mut span = DMatrix::zeros(n, rank);
    let mut comp = DMatrix::zeros(n, n - rank);
    for (k, &i) in order.iter().enumerate() {
        if k < rank {
            span.set_column(k, &eig.eigenvectors.column(i));
        } else {
            comp.set_column(k - rank, &eig.eigenvectors.column(i));
        }
    }
    (span, comp)
}

/// Normal of the hyperplane spanned by the `n − 1` columns of `m` (generalised cross product).
pub(crate) fn cofactor_normal(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows();
    debug_assert_eq!(m.ncols() + 1, n);
    let mut out = DVector::zeros(n);
    for i in 0..n {
        let minor = m.clone().remove_row(i);
        let det = if minor.nrows() == 0 { 1.0 } else { minor.determinant() };
        out[i] = if i % 2 == 0 { det } else { -det };
    }
    out
}

/// Facet rows of the convex hull of `points` in their full-dimensional ambient space.
///
/// Lower-dimensional point sets are handled by working in their affine hull and
/// appending the complementary equalities as pairs of inequalities.
pub(crate) fn facets_of_points(
    points: &[DVector<f64>],
    dim: usize,
) -> Result<(DMatrix<f64>, DVector<f64>), GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::EmptySet);
    }
    let centroid = points.iter().fold(DVector::zeros(dim), |acc, p| acc + p) / points.len() as f64;
    let scale = points
        .iter()
        .fold(1.0_f64, |m, p| m.max((p - &centroid).amax()));
    let mut diffs = DMatrix::zeros(dim, points.len());
    for (j, p) in points.iter().enumerate() {
        diffs.set_column(j, &(p - &centroid));
    }
    let (span, comp) = span_basis(&diffs, 1e-10);
    let k = span.ncols();
    let mut rows = RowSet::default();
    for c in comp.column_iter() {
        let c = c.into_owned();
        let off = c.dot(&centroid);
        rows.push(c.clone(), off);
        rows.push(-c, -off);
    }
    if k == 0 {
        return Ok(rows.into_matrices(dim));
    }
    let local: Vec<DVector<f64>> = points
        .iter()
        .map(|p| span.transpose() * (p - &centroid))
        .collect();
    let tol = 1e-9 * scale;
    let push_local = |n_local: DVector<f64>, off_local: f64, rows: &mut RowSet| {
        let n = &span * &n_local;
        let off = off_local + n.dot(&centroid);
        rows.push(n, off);
    };
    if k == 1 {
        let (lo, hi) = local
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p[0]), hi.max(p[0]))
            });
        push_local(DVector::from_element(1, 1.0), hi, &mut rows);
        push_local(DVector::from_element(1, -1.0), -lo, &mut rows);
        return Ok(rows.into_matrices(dim));
    }
    if k == 2 {
        let pts2: Vec<Point2> = local.iter().map(|p| Point2::new(p[0], p[1])).collect();
        let hull = convex_hull_2d(&pts2);
        for i in 0..hull.len() {
            let p = hull[i];
            let q = hull[(i + 1) % hull.len()];
            let d = q - p;
            // outward normal of a counter-clockwise edge
            let n = DVector::from_vec(vec![d.y, -d.x]);
            let off = n[0] * p.x + n[1] * p.y;
            push_local(n, off, &mut rows);
        }
        return Ok(rows.into_matrices(dim));
    }
    check_budget(local.len(), k, "facet enumeration")?;
    for_each_combination(local.len(), k, |idx| {
        let base = &local[idx[0]];
        let mut m = DMatrix::zeros(k, k - 1);
        for (j, &i) in idx[1..].iter().enumerate() {
            m.set_column(j, &(&local[i] - base));
        }
        let n = cofactor_normal(&m);
        let norm = n.norm();
        if norm <= 1e-12 * scale.powi((k - 1) as i32) {
            return;
        }
        let n = n / norm;
        let off = n.dot(base);
        let (mut above, mut below) = (false, false);
        for p in &local {
            let v = n.dot(p) - off;
            above |= v > tol;
            below |= v < -tol;
            if above && below {
                return;
            }
        }
        if above {
            push_local(-n, -off, &mut rows);
        } else {
            push_local(n, off, &mut rows);
        }
    });
    Ok(rows.into_matrices(dim))
}

/// Vertices of `{x : a x ≤ b}` by solving every `dim`-subset of rows as equalities.
///
/// Returns an empty list when the system has no vertex (infeasible, or unbounded without vertices).
pub(crate) fn vertices_of_hrep(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<Vec<DVector<f64>>, GeometryError> {
    let dim = a.ncols();
    let m = a.nrows();
    if dim == 0 {
        return Ok(if b.iter().all(|&v| v >= -1e-12) {
            vec![DVector::zeros(0)]
        } else {
            Vec::new()
        });
    }
    check_budget(m, dim, "vertex enumeration")?;
    let scale = b.iter().fold(1.0_f64, |s, v| s.max(v.abs()));
    let tol = 1e-9 * scale;
    let mut out: Vec<DVector<f64>> = Vec::new();
    for_each_combination(m, dim, |idx| {
        let mut sub = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        for (r, &i) in idx.iter().enumerate() {
            sub.row_mut(r).copy_from(&a.row(i));
            rhs[r] = b[i];
        }
        let lu = sub.lu();
        let det = lu.determinant();
        if det.abs() < 1e-12 {
            return;
        }
        let Some(x) = lu.solve(&rhs) else { return };
        if (a * &x - b).iter().any(|&v| v > tol) {
            return;
        }
        let dup_tol = 1e-9 * (1.0 + x.amax());
        if out.iter().any(|v| (v - &x).amax() <= dup_tol) {
            return;
        }
        out.push(x);
    });
    Ok(out)
}

/// Facet rows of the zonotope `center ⊕ G[−1, 1]^m`.
pub(crate) fn facets_of_zonotope(
    center: &DVector<f64>,
    generators: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>), GeometryError> {
    let dim = center.len();
    let (span, comp) = span_basis(generators, 1e-10);
    let k = span.ncols();
    let mut rows = RowSet::default();
    for c in comp.column_iter() {
        let c = c.into_owned();
        let off = c.dot(center);
        rows.push(c.clone(), off);
        rows.push(-c, -off);
    }
    if k == 0 {
        return Ok(rows.into_matrices(dim));
    }
    let local = span.transpose() * generators;
    let gens: Vec<DVector<f64>> = local
        .column_iter()
        .filter(|g| g.amax() > 0.0)
        .map(|g| g.into_owned())
        .collect();
    let push_dir = |n_local: DVector<f64>, rows: &mut RowSet| {
        let n = &span * &n_local;
        let h: f64 = gens.iter().map(|g| n_local.dot(g).abs()).sum();
        let off = n.dot(center);
        rows.push(n.clone(), off + h);
        rows.push(-n, -off + h);
    };
    if k == 1 {
        push_dir(DVector::from_element(1, 1.0), &mut rows);
        return Ok(rows.into_matrices(dim));
    }
    check_budget(gens.len(), k - 1, "zonotope facet enumeration")?;
    let gmax = gens.iter().fold(0.0_f64, |m, g| m.max(g.norm()));
    let mut dirs = RowSet::default();
    for_each_combination(gens.len(), k - 1, |idx| {
        let mut m = DMatrix::zeros(k, k - 1);
        for (j, &i) in idx.iter().enumerate() {
            m.set_column(j, &gens[i]);
        }
        let n = cofactor_normal(&m);
        if n.norm() <= 1e-12 * gmax.powi((k - 1) as i32) {
            return;
        }
        // canonical sign so that ±n deduplicate to one entry
        let lead = n.iter().find(|v| v.abs() > 1e-12 * n.amax()).copied().unwrap_or(1.0);
        dirs.push(if lead < 0.0 { -n } else { n }, 0.0);
    });
    for (n, _) in dirs.rows {
        push_dir(n, &mut rows);
    }
    Ok(rows.into_matrices(dim))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hull_of_square_with_interior_point() {
        let pts = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
            Point2::new(0.5, 0.5),
            Point2::new(0.5, 0.0),
        ];
        let h = convex_hull_2d(&pts);
        assert_eq!(h.len(), 4);
        let area: f64 = (0..h.len())
            .map(|i| h[i].perp(&h[(i + 1) % h.len()]))
            .sum::<f64>()
            / 2.0;
        assert!((area - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hull_of_collinear_points_is_segment() {
        let pts = [Point2::new(0.0, 0.0), Point2::new(2.0, 2.0), Point2::new(1.0, 1.0)];
        let h = convex_hull_2d(&pts);
        assert_eq!(h.len(), 2);
    }

    #[test]
    fn combinations_are_complete() {
        let mut count = 0;
        for_each_combination(6, 3, |idx| {
            assert!(idx.windows(2).all(|w| w[0] < w[1]));
            count += 1;
        });
        assert_eq!(count, 20);
        assert_eq!(binomial(6, 3), 20);
        let mut empty = 0;
        for_each_combination(3, 0, |_| empty += 1);
        assert_eq!(empty, 1);
    }

    #[test]
    fn cube_round_trip() {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push(DVector::from_vec(vec![
                if i & 1 == 0 { -1.0 } else { 1.0 },
                if i & 2 == 0 { -1.0 } else { 1.0 },
                if i & 4 == 0 { -1.0 } else { 1.0 },
            ]));
        }
        let (a, b) = facets_of_points(&pts, 3).unwrap();
        assert_eq!(a.nrows(), 6);
        let v = vertices_of_hrep(&a, &b).unwrap();
        assert_eq!(v.len(), 8);
    }

    #[test]
    fn zonotope_square_facets() {
        let c = DVector::from_vec(vec![1.0, 0.0]);
        let g = DMatrix::identity(2, 2);
        let (a, b) = facets_of_zonotope(&c, &g).unwrap();
        assert_eq!(a.nrows(), 4);
        let v = vertices_of_hrep(&a, &b).unwrap();
        assert_eq!(v.len(), 4);
        assert!(v.iter().any(|p| (p - DVector::from_vec(vec![2.0, 1.0])).amax() < 1e-12));
    }
}
