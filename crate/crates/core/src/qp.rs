//! Dense convex quadratic programs.
//!
//! Problems have the form
//!
//! ```text
//! minimise ½ zᵀ H z + gᵀ z + c   subject to   A_eq z = b_eq,   A_in z ≤ b_in
//! ```
//!
//! Equalities are eliminated through an orthonormal null-space basis, and the
//! reduced inequality-constrained problem is solved by a Mehrotra
//! predictor–corrector interior-point method. A primal–dual active-set pass
//! polishes the interior-point iterate and serves as the warm-start path.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::QpError;
use crate::tol;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a_ineq: DMatrix<f64>,
    pub b_ineq: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    /// Constant added to the objective so that it equals the true cost.
    pub constant: f64,
    pub n_steps: usize,
}

impl QpProblem {
    /// Problem with no constraints.
    pub fn unconstrained(h: DMatrix<f64>, g: DVector<f64>) -> Self {
        let n = g.len();
        Self {
            h,
            g,
            a_ineq: DMatrix::zeros(0, n),
            b_ineq: DVector::zeros(0),
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            constant: 0.0,
            n_steps: 0,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.g.len()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.g.dot(z) + self.constant
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.g.len();
        let shape_err = |what: &str, r: usize, c: usize| {
            QpError::DimensionMismatch(format!("{what} is {r}×{c}, expected {n} columns"))
        };
        if self.h.nrows() != n || self.h.ncols() != n {
            return Err(shape_err("H", self.h.nrows(), self.h.ncols()));
        }
        if self.a_ineq.ncols() != n || self.a_ineq.nrows() != self.b_ineq.len() {
            return Err(shape_err("A_ineq", self.a_ineq.nrows(), self.a_ineq.ncols()));
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return Err(shape_err("A_eq", self.a_eq.nrows(), self.a_eq.ncols()));
        }
        let finite = |m: &[f64]| m.iter().all(|v| v.is_finite());
        if !finite(self.h.as_slice()) {
            return Err(QpError::NonFinite("H"));
        }
        if !finite(self.g.as_slice()) {
            return Err(QpError::NonFinite("g"));
        }
        if !finite(self.a_ineq.as_slice()) || !finite(self.b_ineq.as_slice()) {
            return Err(QpError::NonFinite("inequalities"));
        }
        if !finite(self.a_eq.as_slice()) || !finite(self.b_eq.as_slice()) {
            return Err(QpError::NonFinite("equalities"));
        }
        check_psd("H", &self.h)?;
        Ok(())
    }

    /// Plain-text dump: a header line, then each named block as `name rows cols`
    /// followed by its rows.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# qp-dump v1");
        let _ = writeln!(out, "n_steps {}", self.n_steps);
        let _ = writeln!(out, "constant {:e}", self.constant);
        let mut block = |name: &str, m: &DMatrix<f64>| {
            let _ = writeln!(out, "{name} {} {}", m.nrows(), m.ncols());
            for r in m.row_iter() {
                let line: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
                let _ = writeln!(out, "{}", line.join(" "));
            }
        };
        let col = |v: &DVector<f64>| DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        block("H", &self.h);
        block("g", &col(&self.g));
        block("A_ineq", &self.a_ineq);
        block("b_ineq", &col(&self.b_ineq));
        block("A_eq", &self.a_eq);
        block("b_eq", &col(&self.b_eq));
        out
    }

    pub fn from_text(text: &str) -> Result<Self, QpError> {
        let bad = |msg: String| QpError::DimensionMismatch(format!("dump: {msg}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let mut scalar = |key: &str| -> Result<String, QpError> {
            let l = lines.next().ok_or_else(|| bad(format!("missing {key}")))?;
            let mut it = l.split_whitespace();
            if it.next() != Some(key) {
                return Err(bad(format!("expected {key}, found `{l}`")));
            }
            it.next().map(str::to_string).ok_or_else(|| bad(format!("{key} has no value")))
        };
        let n_steps: usize = scalar("n_steps")?.parse().map_err(|e| bad(format!("{e}")))?;
        let constant: f64 = scalar("constant")?.parse().map_err(|e| bad(format!("{e}")))?;
        let mut read_block = |name: &str| -> Result<DMatrix<f64>, QpError> {
            let head = lines.next().ok_or_else(|| bad(format!("missing block {name}")))?;
            let parts: Vec<&str> = head.split_whitespace().collect();
            if parts.len() != 3 || parts[0] != name {
                return Err(bad(format!("expected header for {name}, found `{head}`")));
            }
            let r: usize = parts[1].parse().map_err(|e| bad(format!("{e}")))?;
            let c: usize = parts[2].parse().map_err(|e| bad(format!("{e}")))?;
            let mut m = DMatrix::zeros(r, c);
            for i in 0..r {
                let l = lines.next().ok_or_else(|| bad(format!("{name} truncated")))?;
                let vals: Vec<f64> = l
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| bad(format!("{e}")))?;
                if vals.len() != c {
                    return Err(bad(format!("{name} row {i} has {} entries", vals.len())));
                }
                for (j, v) in vals.into_iter().enumerate() {
                    m[(i, j)] = v;
                }
            }
            Ok(m)
        };
        let h = read_block("H")?;
        let g = read_block("g")?.column(0).into_owned();
        let a_ineq = read_block("A_ineq")?;
        let b_ineq = read_block("b_ineq")?;
        let a_eq = read_block("A_eq")?;
        let b_eq = read_block("b_eq")?;
        let col = |m: DMatrix<f64>| {
            if m.ncols() == 0 {
                DVector::zeros(m.nrows())
            } else {
                m.column(0).into_owned()
            }
        };
        let p = Self {
            h,
            g,
            a_ineq,
            b_ineq: col(b_ineq),
            a_eq,
            b_eq: col(b_eq),
            constant,
            n_steps,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Rejects matrices with an eigenvalue below `−1e-9 · max(1, ‖M‖)`; `M` must be symmetric.
pub fn check_psd(name: &'static str, m: &DMatrix<f64>) -> Result<(), QpError> {
    if m.nrows() != m.ncols() {
        return Err(QpError::DimensionMismatch(format!("{name} is not square")));
    }
    if m.nrows() == 0 {
        return Ok(());
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-9 * scale {
        return Err(QpError::NotPsd {
            name,
            min_eig: f64::NAN,
        });
    }
    let min_eig = m
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eig < -1e-9 * scale {
        return Err(QpError::NotPsd { name, min_eig });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

impl QpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            QpStatus::Optimal => "OPTIMAL",
            QpStatus::Infeasible => "INFEASIBLE",
            QpStatus::MaxIter => "MAX_ITER",
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub status: QpStatus,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub lambda_ineq: DVector<f64>,
    pub y_eq: DVector<f64>,
    /// For infeasible problems: `(λ, y)` with `λ ≥ 0`, `A_inᵀλ + A_eqᵀy ≈ 0` and
    /// `b_inᵀλ + b_eqᵀy < 0`.
    pub certificate: Option<DVector<f64>>,
    /// Inequality rows holding with equality at the solution.
    pub active_set: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub max_iter: usize,
    /// Relative stopping tolerance of the interior-point iteration.
    pub tol: f64,
    /// Maximum KKT residual accepted as optimal.
    pub kkt_tol: f64,
    /// Iteration budget of the active-set warm start.
    pub active_set_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iter: 4000,
            tol: 1e-10,
            kkt_tol: tol::KKT,
            active_set_iter: 8,
        }
    }
}

/// Previous solution used to seed the next solve.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub active_set: Vec<usize>,
}

pub fn solve(p: &QpProblem) -> Result<QpSolution, QpError> {
    solve_with(p, &SolverSettings::default(), None)
}

/// Equality-reduced problem `min ½ wᵀPw + qᵀw  s.t.  G w ≤ h` with `z = z_p + Z w`.
struct Reduced {
    basis: DMatrix<f64>,
    z_p: DVector<f64>,
    p: DMatrix<f64>,
    q: DVector<f64>,
    g: DMatrix<f64>,
    h: DVector<f64>,
}

fn reduce(prob: &QpProblem) -> Result<Reduced, DVector<f64>> {
    let n = prob.n_vars();
    let m_eq = prob.a_eq.nrows();
    let (basis, z_p) = if m_eq == 0 {
        (DMatrix::identity(n, n), DVector::zeros(n))
    } else {
        // pad to square so the SVD returns a complete right basis
        let rows = m_eq.max(n);
        let mut padded = DMatrix::zeros(rows, n);
        padded.rows_mut(0, m_eq).copy_from(&prob.a_eq);
        let svd = padded.svd(true, true);
        let u = svd.u.expect("requested");
        let v_t = svd.v_t.expect("requested");
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let cutoff = 1e-11 * smax.max(1.0);
        let mut range_idx = Vec::new();
        let mut null_idx = Vec::new();
        for i in 0..n {
            if svd.singular_values[i] > cutoff {
                range_idx.push(i);
            } else {
                null_idx.push(i);
            }
        }
        let mut z_p = DVector::zeros(n);
        let mut b_pad = DVector::zeros(rows);
        b_pad.rows_mut(0, m_eq).copy_from(&prob.b_eq);
        for &i in &range_idx {
            let coef = u.column(i).dot(&b_pad) / svd.singular_values[i];
            z_p += v_t.row(i).transpose() * coef;
        }
        let resid = &prob.a_eq * &z_p - &prob.b_eq;
        let scale = 1.0 + prob.b_eq.amax();
        if resid.amax() > 1e-9 * scale {
            return Err(resid);
        }
        let mut basis = DMatrix::zeros(n, null_idx.len());
        for (k, &i) in null_idx.iter().enumerate() {
            basis.set_column(k, &v_t.row(i).transpose());
        }
        (basis, z_p)
    };
    let hz = &prob.h * &basis;
    let p = basis.transpose() * &hz;
    let p = 0.5 * (&p + p.transpose());
    let q = basis.transpose() * (&prob.h * &z_p + &prob.g);
    let g = &prob.a_ineq * &basis;
    let h = &prob.b_ineq - &prob.a_ineq * &z_p;
    Ok(Reduced {
        basis,
        z_p,
        p,
        q,
        g,
        h,
    })
}

struct Iterate {
    w: DVector<f64>,
    lam: DVector<f64>,
    s: DVector<f64>,
    iterations: usize,
    converged: bool,
}

fn solve_spd(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    let reg = 1e-12 * m.amax().max(1.0);
    let shifted = m + DMatrix::identity(m.nrows(), m.ncols()) * reg;
    shifted.lu().solve(rhs)
}

/// Mehrotra predictor–corrector on the reduced problem.
fn interior_point(r: &Reduced, settings: &SolverSettings, budget: usize) -> Iterate {
    let nw = r.p.nrows();
    let m = r.g.nrows();
    let scale_q = 1.0 + r.q.amax();
    let scale_h = 1.0 + r.h.amax();
    if m == 0 {
        let w = solve_spd(&r.p, &(-&r.q)).unwrap_or_else(|| DVector::zeros(nw));
        return Iterate {
            w,
            lam: DVector::zeros(0),
            s: DVector::zeros(0),
            iterations: 1,
            converged: true,
        };
    }
    // least-squares start, shifted into the interior
    let gtg = r.g.transpose() * &r.g;
    let w0 = solve_spd(&(&r.p + &gtg), &(r.g.transpose() * &r.h - &r.q)).unwrap_or_else(|| DVector::zeros(nw));
    let mut w = if w0.iter().all(|v| v.is_finite()) { w0 } else { DVector::zeros(nw) };
    let mut s = &r.h - &r.g * &w;
    let shift = (-s.min()).max(0.0) + 1.0;
    s.add_scalar_mut(shift);
    let mut lam = DVector::from_element(m, 1.0);
    let mut best: Option<(f64, DVector<f64>, DVector<f64>, DVector<f64>)> = None;
    let mut since_best = 0;
    let mut done = 0;
    for it in 1..=budget {
        done = it;
        let r_d = &r.p * &w + &r.q + r.g.transpose() * &lam;
        let r_p = &r.g * &w + &s - &r.h;
        let mu = s.dot(&lam) / m as f64;
        let merit = (r_d.amax() / scale_q).max(r_p.amax() / scale_h).max(mu);
        if merit <= settings.tol {
            return Iterate {
                w,
                lam,
                s,
                iterations: it - 1,
                converged: true,
            };
        }
        match &best {
            Some((b, ..)) if merit >= 0.5 * b => {
                since_best += 1;
                if since_best > 60 {
                    break;
                }
            }
            _ => {
                best = Some((merit, w.clone(), lam.clone(), s.clone()));
                since_best = 0;
            }
        }
        if lam.amax() > 1e14 * scale_q || w.amax() > 1e14 * scale_h {
            break;
        }
        let d = lam.component_div(&s);
        let mut gd = r.g.clone();
        for (i, mut row) in gd.row_iter_mut().enumerate() {
            row *= d[i];
        }
        let kkt = &r.p + r.g.transpose() * &gd;
        let kkt = 0.5 * (&kkt + kkt.transpose());
        let factor = kkt.clone().cholesky();
        let reg_lu = if factor.is_none() {
            let reg = 1e-12 * kkt.amax().max(1.0);
            Some((&kkt + DMatrix::identity(nw, nw) * reg).lu())
        } else {
            None
        };
        let solve = |rhs: &DVector<f64>| -> Option<DVector<f64>> {
            match (&factor, &reg_lu) {
                (Some(ch), _) => Some(ch.solve(rhs)),
                (None, Some(lu)) => lu.solve(rhs),
                _ => None,
            }
        };
        let direction = |r_c: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
            // Δλ = D(GΔw + r_p) − S⁻¹r_c, Δs = −Λ⁻¹(r_c + SΔλ)
            let t = d.component_mul(&r_p) - r_c.component_div(&s);
            let rhs = -&r_d - r.g.transpose() * &t;
            let dw = solve(&rhs)?;
            let dlam = d.component_mul(&(&r.g * &dw + &r_p)) - r_c.component_div(&s);
            let ds = -(r_c + s.component_mul(&dlam)).component_div(&lam);
            Some((dw, dlam, ds))
        };
        let step_to_boundary = |v: &DVector<f64>, dv: &DVector<f64>| {
            v.iter()
                .zip(dv.iter())
                .filter(|(_, d)| **d < 0.0)
                .map(|(x, d)| -x / d)
                .fold(1.0_f64, f64::min)
        };
        let rc_aff = s.component_mul(&lam);
        let Some((dw_a, dl_a, ds_a)) = direction(&rc_aff) else { break };
        let a_aff = step_to_boundary(&s, &ds_a).min(step_to_boundary(&lam, &dl_a));
        let mu_aff = (&s + &ds_a * a_aff).dot(&(&lam + &dl_a * a_aff)) / m as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
        let rc = &rc_aff + ds_a.component_mul(&dl_a) - DVector::from_element(m, sigma * mu);
        let Some((dw, dl, ds)) = direction(&rc) else { break };
        let _ = dw_a;
        let alpha = (0.99 * step_to_boundary(&s, &ds).min(step_to_boundary(&lam, &dl))).min(1.0);
        w += &dw * alpha;
        lam += &dl * alpha;
        s += &ds * alpha;
        // keep strictly interior
        s.apply(|v| *v = v.max(1e-300));
        lam.apply(|v| *v = v.max(1e-300));
        if it == budget {
            return Iterate {
                w,
                lam,
                s,
                iterations: it,
                converged: false,
            };
        }
    }
    let iterations = done;
    match best {
        Some((_, w, lam, s)) => Iterate {
            w,
            lam,
            s,
            iterations,
            converged: false,
        },
        None => Iterate {
            w,
            lam,
            s,
            iterations,
            converged: false,
        },
    }
}

/// Primal–dual active-set iteration from an initial guess of the active rows.
fn active_set_iteration(r: &Reduced, mut active: Vec<bool>, max_iter: usize) -> Option<(DVector<f64>, DVector<f64>, usize)> {
    let nw = r.p.nrows();
    let m = r.g.nrows();
    for it in 1..=max_iter {
        let idx: Vec<usize> = (0..m).filter(|&i| active[i]).collect();
        let k = idx.len();
        let mut kkt = DMatrix::zeros(nw + k, nw + k);
        kkt.view_mut((0, 0), (nw, nw)).copy_from(&r.p);
        let mut rhs = DVector::zeros(nw + k);
        rhs.rows_mut(0, nw).copy_from(&(-&r.q));
        for (j, &i) in idx.iter().enumerate() {
            for c in 0..nw {
                kkt[(nw + j, c)] = r.g[(i, c)];
                kkt[(c, nw + j)] = r.g[(i, c)];
            }
            rhs[nw + j] = r.h[i];
        }
        let lu = kkt.lu();
        let sol = lu.solve(&rhs)?;
        if !sol.iter().all(|v| v.is_finite()) {
            return None;
        }
        let w = sol.rows(0, nw).into_owned();
        let mut lam = DVector::zeros(m);
        for (j, &i) in idx.iter().enumerate() {
            lam[i] = sol[nw + j];
        }
        // the linear solve can succeed on a singular system; verify stationarity
        let stat = &r.p * &w + &r.q + r.g.transpose() * &lam;
        if stat.amax() > 1e-8 * (1.0 + r.q.amax() + lam.amax()) {
            return None;
        }
        let viol = &r.g * &w - &r.h;
        let next: Vec<bool> = (0..m).map(|i| lam[i] + viol[i] > 0.0).collect();
        if next == active {
            let scale = 1.0 + r.h.amax();
            let feasible = viol.iter().all(|v| *v <= 1e-9 * scale);
            let dual_ok = lam.iter().all(|v| *v >= -1e-9 * (1.0 + lam.amax()));
            if feasible && dual_ok {
                return Some((w, lam.map(|v| v.max(0.0)), it));
            }
            return None;
        }
        active = next;
    }
    None
}

/// Least-squares equality multipliers and the full KKT residual at `(z, λ)`. Complementarity
/// enters as `min(λᵢ, sᵢ)`, which stays meaningful when multipliers are large.
fn kkt_report(prob: &QpProblem, z: &DVector<f64>, lam: &DVector<f64>) -> (DVector<f64>, f64) {
    let grad = &prob.h * z + &prob.g + prob.a_ineq.transpose() * lam;
    let y = if prob.a_eq.nrows() > 0 {
        let aat = &prob.a_eq * prob.a_eq.transpose();
        let rhs = -(&prob.a_eq * &grad);
        solve_spd(&aat, &rhs)
            .or_else(|| aat.clone().pseudo_inverse(1e-12).ok().map(|p| p * &rhs))
            .unwrap_or_else(|| DVector::zeros(prob.a_eq.nrows()))
    } else {
        DVector::zeros(0)
    };
    let stat = &grad + prob.a_eq.transpose() * &y;
    let mut res = stat.amax();
    if prob.a_eq.nrows() > 0 {
        res = res.max((&prob.a_eq * z - &prob.b_eq).amax());
    }
    if prob.a_ineq.nrows() > 0 {
        let slack = &prob.b_ineq - &prob.a_ineq * z;
        for i in 0..slack.len() {
            res = res
                .max((-slack[i]).max(0.0))
                .max((-lam[i]).max(0.0))
                .max(lam[i].min(slack[i]).abs());
        }
    }
    (y, res)
}

/// Phase-one LP `min t  s.t.  G w − t ≤ h,  t ≥ −1`. A positive optimum proves infeasibility;
/// its multipliers form the Farkas certificate.
fn phase_one(r: &Reduced, settings: &SolverSettings) -> Option<(f64, DVector<f64>)> {
    let nw = r.p.nrows();
    let m = r.g.nrows();
    let mut g = DMatrix::zeros(m + 1, nw + 1);
    g.view_mut((0, 0), (m, nw)).copy_from(&r.g);
    for i in 0..m {
        g[(i, nw)] = -1.0;
    }
    g[(m, nw)] = -1.0;
    let mut h = DVector::zeros(m + 1);
    h.rows_mut(0, m).copy_from(&r.h);
    h[m] = 1.0;
    let mut p = DMatrix::identity(nw + 1, nw + 1) * 1e-10;
    p[(nw, nw)] = 0.0;
    let mut q = DVector::zeros(nw + 1);
    q[nw] = 1.0;
    let aux = Reduced {
        basis: DMatrix::zeros(0, 0),
        z_p: DVector::zeros(0),
        p,
        q,
        g,
        h,
    };
    let it = interior_point(&aux, settings, 500);
    let t = it.w[nw];
    Some((t, it.lam.rows(0, m).into_owned()))
}

pub fn solve_with(
    prob: &QpProblem,
    settings: &SolverSettings,
    warm: Option<&WarmStart>,
) -> Result<QpSolution, QpError> {
    prob.validate()?;
    let n = prob.n_vars();
    let m = prob.a_ineq.nrows();
    let r = match reduce(prob) {
        Ok(r) => r,
        Err(resid) => {
            // inconsistent equalities: y = residual direction gives b_eqᵀy ≠ 0 with A_eqᵀy ≈ 0
            let y = -resid;
            let mut cert = DVector::zeros(m + y.len());
            cert.rows_mut(m, y.len()).copy_from(&y);
            return Ok(QpSolution {
                z: DVector::zeros(n),
                status: QpStatus::Infeasible,
                objective: f64::NAN,
                kkt_residual: f64::INFINITY,
                iterations: 0,
                lambda_ineq: DVector::zeros(m),
                y_eq: DVector::zeros(prob.a_eq.nrows()),
                certificate: Some(cert),
                active_set: Vec::new(),
            });
        }
    };
    let finish = |w: &DVector<f64>, lam: &DVector<f64>, iterations: usize| {
        let z = &r.z_p + &r.basis * w;
        let (y, res) = kkt_report(prob, &z, lam);
        let scale = 1.0 + r.h.amax();
        let slack = &prob.b_ineq - &prob.a_ineq * &z;
        let active_set = (0..m).filter(|&i| slack[i].abs() <= 1e-8 * scale).collect();
        QpSolution {
            objective: prob.objective(&z),
            z,
            status: if res < settings.kkt_tol {
                QpStatus::Optimal
            } else {
                QpStatus::MaxIter
            },
            kkt_residual: res,
            iterations,
            lambda_ineq: lam.clone(),
            y_eq: y,
            certificate: None,
            active_set,
        }
    };

    let mut used = 0;
    if let Some(ws) = warm {
        let mut guess = vec![false; m];
        for &i in &ws.active_set {
            if i < m {
                guess[i] = true;
            }
        }
        if let Some((w, lam, its)) = active_set_iteration(&r, guess, settings.active_set_iter) {
            let sol = finish(&w, &lam, its);
            if sol.status == QpStatus::Optimal {
                return Ok(sol);
            }
            used += its;
        } else {
            used += settings.active_set_iter.min(1);
        }
    }

    let ipm = interior_point(&r, settings, settings.max_iter.saturating_sub(used).max(1));
    used += ipm.iterations;
    let mut sol = finish(&ipm.w, &ipm.lam, used);
    if m > 0 {
        // polish on the active set identified by the interior-point iterate
        let guess: Vec<bool> = (0..m).map(|i| ipm.lam[i] > ipm.s[i]).collect();
        if let Some((w, lam, its)) = active_set_iteration(&r, guess, 30) {
            let polished = finish(&w, &lam, used + its);
            if polished.kkt_residual < sol.kkt_residual {
                sol = polished;
            }
        }
    }
    if sol.status == QpStatus::Optimal || m == 0 {
        return Ok(sol);
    }
    let primal_violation = (&prob.a_ineq * &sol.z - &prob.b_ineq).max().max(0.0);
    if ipm.converged && primal_violation <= tol::QP_FEASIBILITY {
        return Ok(sol);
    }
    if let Some((t, lam)) = phase_one(&r, settings) {
        if t > tol::QP_FEASIBILITY * (1.0 + r.h.amax()) {
            let lam = lam.map(|v| v.max(0.0));
            let total = lam.sum();
            let lam = if total > 0.0 { lam / total } else { lam };
            let y = if prob.a_eq.nrows() > 0 {
                let aat = &prob.a_eq * prob.a_eq.transpose();
                solve_spd(&aat, &(-(&prob.a_eq * (prob.a_ineq.transpose() * &lam))))
                    .unwrap_or_else(|| DVector::zeros(prob.a_eq.nrows()))
            } else {
                DVector::zeros(0)
            };
            let mut cert = DVector::zeros(m + y.len());
            cert.rows_mut(0, m).copy_from(&lam);
            cert.rows_mut(m, y.len()).copy_from(&y);
            sol.status = QpStatus::Infeasible;
            sol.certificate = Some(cert);
        }
    }
    Ok(sol)
}

/// Planar halfspace row `n · (ξ[ix], ξ[iy]) ≤ d` applied to every predicted state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarRow {
    pub normal: [f64; 2],
    pub offset: f64,
}

/// Data of a finite-horizon tracking problem over `x⁺ = A x + B u`.
#[derive(Debug, Clone)]
pub struct HorizonSpec {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub horizon: usize,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub x0: DVector<f64>,
    /// References for `k = 0..=N`.
    pub x_ref: Vec<DVector<f64>>,
    pub state_bounds: Option<(DVector<f64>, DVector<f64>)>,
    pub input_bounds: Option<(DVector<f64>, DVector<f64>)>,
    /// Indices of the planar position coordinates in the state.
    pub position_index: (usize, usize),
    pub planar: Vec<PlanarRow>,
    /// Quadratic penalty on per-step slacks of the planar rows and of the state box (one
    /// slack per step shared by all box rows); `None` keeps them hard.
    pub slack_penalty: Option<f64>,
}

impl HorizonSpec {
    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    /// Index of state component `i` at step `k ∈ 1..=N`.
    pub fn state_index(&self, k: usize, i: usize) -> usize {
        (k - 1) * self.nx() + i
    }

    /// Index of input component `j` at step `k ∈ 0..N`.
    pub fn input_index(&self, k: usize, j: usize) -> usize {
        self.horizon * self.nx() + k * self.nu() + j
    }

    /// Slack variables per step; the state-box slack, when present, comes after the planar ones.
    pub fn slacks_per_step(&self) -> usize {
        if self.slack_penalty.is_some() {
            self.planar.len() + usize::from(self.state_bounds.is_some())
        } else {
            0
        }
    }

    /// Index of slack `row` at step `k ∈ 1..=N`; `row = planar.len()` is the state-box slack.
    pub fn slack_index(&self, k: usize, row: usize) -> usize {
        self.horizon * (self.nx() + self.nu()) + (k - 1) * self.slacks_per_step() + row
    }

    pub fn n_vars(&self) -> usize {
        self.horizon * (self.nx() + self.nu() + self.slacks_per_step())
    }
}

/// Stack states and inputs, impose dynamics as equalities and every box and planar row
/// on every predicted step.
pub fn assemble(spec: &HorizonSpec) -> Result<QpProblem, QpError> {
    let nx = spec.nx();
    let nu = spec.nu();
    let n_steps = spec.horizon;
    if n_steps < 1 {
        return Err(QpError::Horizon { min: 1, got: n_steps });
    }
    let dims_ok = spec.a.ncols() == nx
        && spec.b.nrows() == nx
        && spec.q.shape() == (nx, nx)
        && spec.p.shape() == (nx, nx)
        && spec.r.shape() == (nu, nu)
        && spec.x0.len() == nx
        && spec.x_ref.len() == n_steps + 1
        && spec.x_ref.iter().all(|r| r.len() == nx);
    if !dims_ok {
        return Err(QpError::DimensionMismatch(format!(
            "model is {nx}×{nx}/{nx}×{nu}; weights, x0 and {} references must agree",
            n_steps + 1
        )));
    }
    if !spec.x0.iter().all(|v| v.is_finite()) {
        return Err(QpError::NonFinite("x0"));
    }
    check_psd("Q", &spec.q)?;
    check_psd("R", &spec.r)?;
    check_psd("P", &spec.p)?;
    let n = spec.n_vars();
    let mut h = DMatrix::zeros(n, n);
    let mut g = DVector::zeros(n);
    let mut constant = {
        let e = &spec.x0 - &spec.x_ref[0];
        e.dot(&(&spec.q * &e))
    };
    for k in 1..=n_steps {
        let w = if k == n_steps { &spec.p } else { &spec.q };
        let base = spec.state_index(k, 0);
        let r = &spec.x_ref[k];
        // (x − r)ᵀ W (x − r) = xᵀWx − 2 rᵀWx + rᵀWr
        h.view_mut((base, base), (nx, nx)).add_assign(&(w * 2.0));
        g.rows_mut(base, nx).add_assign(&(w * r * -2.0));
        constant += r.dot(&(w * r));
    }
    for k in 0..n_steps {
        let base = spec.input_index(k, 0);
        h.view_mut((base, base), (nu, nu)).add_assign(&(&spec.r * 2.0));
    }
    if let Some(rho) = spec.slack_penalty {
        for k in 1..=n_steps {
            for row in 0..spec.slacks_per_step() {
                let i = spec.slack_index(k, row);
                h[(i, i)] = 2.0 * rho;
            }
        }
    }

    let mut a_eq = DMatrix::zeros(n_steps * nx, n);
    let mut b_eq = DVector::zeros(n_steps * nx);
    for k in 0..n_steps {
        let row = k * nx;
        // x_{k+1} − A x_k − B u_k = 0
        for i in 0..nx {
            a_eq[(row + i, spec.state_index(k + 1, i))] = 1.0;
        }
        if k == 0 {
            b_eq.rows_mut(0, nx).copy_from(&(&spec.a * &spec.x0));
        } else {
            let col = spec.state_index(k, 0);
            a_eq.view_mut((row, col), (nx, nx)).copy_from(&(-&spec.a));
        }
        let col = spec.input_index(k, 0);
        a_eq.view_mut((row, col), (nx, nu)).copy_from(&(-&spec.b));
    }

    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    let mut push_bounds =
        |lo: &DVector<f64>, hi: &DVector<f64>, index: &dyn Fn(usize) -> usize, slack: Option<usize>| {
            for i in 0..lo.len() {
                for (bound, sign) in [(hi[i], 1.0), (-lo[i], -1.0)] {
                    if bound.is_finite() {
                        let mut entries = vec![(index(i), sign)];
                        entries.extend(slack.map(|s| (s, -1.0)));
                        rows.push((entries, bound));
                    }
                }
            }
        };
    if let Some((lo, hi)) = &spec.state_bounds {
        for k in 1..=n_steps {
            let slack = spec.slack_penalty.map(|_| spec.slack_index(k, spec.planar.len()));
            push_bounds(lo, hi, &|i| spec.state_index(k, i), slack);
        }
    }
    if let Some((lo, hi)) = &spec.input_bounds {
        for k in 0..n_steps {
            push_bounds(lo, hi, &|j| spec.input_index(k, j), None);
        }
    }
    let (ix, iy) = spec.position_index;
    for k in 1..=n_steps {
        for (ri, pr) in spec.planar.iter().enumerate() {
            let mut entries = vec![
                (spec.state_index(k, ix), pr.normal[0]),
                (spec.state_index(k, iy), pr.normal[1]),
            ];
            if spec.slack_penalty.is_some() {
                entries.push((spec.slack_index(k, ri), -1.0));
            }
            rows.push((entries, pr.offset));
        }
    }
    if spec.slack_penalty.is_some() {
        for k in 1..=n_steps {
            for ri in 0..spec.slacks_per_step() {
                rows.push((vec![(spec.slack_index(k, ri), -1.0)], 0.0));
            }
        }
    }
    let mut a_ineq = DMatrix::zeros(rows.len(), n);
    let mut b_ineq = DVector::zeros(rows.len());
    for (r, (entries, rhs)) in rows.into_iter().enumerate() {
        for (c, v) in entries {
            a_ineq[(r, c)] += v;
        }
        b_ineq[r] = rhs;
    }
    Ok(QpProblem {
        h,
        g,
        a_ineq,
        b_ineq,
        a_eq,
        b_eq,
        constant,
        n_steps,
    })
}

use std::ops::AddAssign;
