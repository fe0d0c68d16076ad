//! Outer approximation of the minimal robust positively invariant set.

use nalgebra::{DMatrix, DVector};

use super::polytope::{Polytope, Zonotope};
use crate::error::GeometryError;
use crate::tol;

/// Default iteration cap for [`compute_mrpi`].
pub const MRPI_ITERATION_CAP: usize = 200;

#[derive(Debug, Clone)]
pub struct MrpiResult {
    /// `(1 − α)⁻¹ (W ⊕ A W ⊕ … ⊕ A^{s−1} W)`.
    pub set: Polytope,
    pub s: usize,
    pub alpha: f64,
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// ε-outer approximation of the mRPI set of `x⁺ = A x + w`, `w ∈ W`.
///
/// For each `s` the smallest admissible `α` with `A^s W ⊆ α W` is evaluated exactly
/// from support functions, and the iteration stops once
/// `α ≤ ε / (ε + M(s))`, where `M(s)` bounds the partial sum in the ∞-norm.
/// The result then lies within an `ε` ∞-ball of the true minimal set.
pub fn compute_mrpi(a: &DMatrix<f64>, w: &Polytope, eps: f64) -> Result<MrpiResult, GeometryError> {
    compute_mrpi_capped(a, w, eps, MRPI_ITERATION_CAP)
}

pub fn compute_mrpi_capped(
    a: &DMatrix<f64>,
    w: &Polytope,
    eps: f64,
    cap: usize,
) -> Result<MrpiResult, GeometryError> {
    let n = w.dim();
    if a.nrows() != n || a.ncols() != n {
        return Err(GeometryError::DimensionMismatch {
            expected: n,
            found: a.nrows(),
        });
    }
    let rho = spectral_radius(a);
    if rho >= 1.0 {
        return Err(GeometryError::NotHurwitz {
            spectral_radius: rho,
        });
    }
    if !w.contains_origin()? {
        return Err(GeometryError::OriginNotContained);
    }
    let h = w.hrep()?.clone();
    let unit = |j: usize, sign: f64| {
        let mut e = DVector::zeros(n);
        e[j] = sign;
        e
    };
    // running ∞-norm bound of W ⊕ … ⊕ A^{s−1} W, kept per signed axis
    let mut axis_support = vec![0.0_f64; 2 * n];
    let mut powers: Vec<DMatrix<f64>> = Vec::new();
    let mut a_pow = DMatrix::identity(n, n);
    let mut last = (f64::INFINITY, 0.0);
    for s in 1..=cap {
        for j in 0..n {
            for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
                let d = a_pow.transpose() * unit(j, sign);
                axis_support[2 * j + k] += w.support(&d)?;
            }
        }
        powers.push(a_pow.clone());
        a_pow = a * &a_pow;
        let alpha = containment_factor(&a_pow, w, &h.a, &h.b)?;
        let m_s = axis_support.iter().cloned().fold(0.0, f64::max);
        let bound = eps / (eps + m_s);
        last = (alpha, bound);
        if alpha <= bound {
            log::debug!("mRPI converged at s = {s}, alpha = {alpha:.3e}");
            let set = partial_sum(&powers, w, 1.0 / (1.0 - alpha))?;
            return Ok(MrpiResult { set, s, alpha });
        }
    }
    Err(GeometryError::MrpiIterationCap {
        cap,
        alpha: last.0,
        bound: last.1,
    })
}

/// Smallest `α ≥ 0` with `A W ⊆ α W` given `W = {x : F x ≤ g}`.
fn containment_factor(
    a: &DMatrix<f64>,
    w: &Polytope,
    f: &DMatrix<f64>,
    g: &DVector<f64>,
) -> Result<f64, GeometryError> {
    let scale = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut alpha = 0.0_f64;
    for i in 0..f.nrows() {
        let d = a.transpose() * f.row(i).transpose();
        let hs = w.support(&d)?;
        if g[i] <= tol::RANK * scale.max(1.0) {
            // facet through the origin: only a zero image keeps A W on the right side
            if hs > tol::RANK * scale.max(1.0) {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        alpha = alpha.max(hs / g[i]);
    }
    Ok(alpha)
}

fn partial_sum(powers: &[DMatrix<f64>], w: &Polytope, scale: f64) -> Result<Polytope, GeometryError> {
    let n = w.dim();
    if let Some(z) = w.zonotope() {
        let m = z.order();
        let mut gens = DMatrix::zeros(n, m * powers.len());
        let mut center = DVector::zeros(n);
        for (i, p) in powers.iter().enumerate() {
            center += p * &z.center;
            gens.columns_mut(i * m, m).copy_from(&(p * &z.generators));
        }
        return Ok(Polytope::from_zonotope(Zonotope::new(
            center * scale,
            gens * scale,
        )?));
    }
    let mut acc = Polytope::origin(n);
    for p in powers {
        acc = acc.minkowski_sum(&w.linear_map(p)?)?;
    }
    acc.scaled(scale)
}

/// `A Z ⊕ W ⊆ Z`, checked facet by facet through support functions with relative slack.
pub fn is_robust_invariant(
    a: &DMatrix<f64>,
    w: &Polytope,
    z: &Polytope,
    rel_tol: f64,
) -> Result<bool, GeometryError> {
    let h = z.hrep()?;
    for i in 0..h.len() {
        let n = h.a.row(i).transpose();
        let lhs = z.support(&(a.transpose() * &n))? + w.support(&n)?;
        if lhs > h.b[i] + rel_tol * h.b[i].abs() + tol::CONTAINMENT_ABS {
            return Ok(false);
        }
    }
    Ok(true)
}
