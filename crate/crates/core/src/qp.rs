//! Small dense convex quadratic programs.
//!
//! Solves
//!
//! ```text
//!     minimize     1/2 x' H x + g' x
//!     subject to   A x <= b
//! ```
//!
//! with `H` positive semidefinite, using a Mehrotra predictor-corrector
//! primal-dual interior point method. Linear programs are the special case
//! `H = 0`. Problems here are tiny (a few dozen variables), so every Newton
//! system is formed densely and factored with Cholesky.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("interior point method did not converge after {iters} iterations (primal residual {primal:.3e}, dual residual {dual:.3e}, gap {gap:.3e})")]
    NotConverged {
        iters: usize,
        primal: f64,
        dual: f64,
        gap: f64,
    },
    #[error("Newton system is singular")]
    Singular,
    #[error("constraints are infeasible")]
    Infeasible,
}

/// Relative tolerance for recognizing a row pair as one equality.
const PAIR_TOL: f64 = 1e-12;

/// A dense QP instance. `h` may be an empty (0x0) matrix for linear programs.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// KKT residuals of a returned solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `max |H x + g + A' z|`
    pub stationarity: f64,
    /// `max (A x - b)_+`
    pub primal_infeasibility: f64,
    /// `max |z_i (b - A x)_i|`
    pub complementarity: f64,
    /// `max (-z)_+`
    pub dual_infeasibility: f64,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub z: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt: KktResiduals,
}

#[derive(Debug, Clone, Copy)]
pub struct QpSettings {
    pub max_iters: usize,
    pub tol_stationarity: f64,
    pub tol_primal: f64,
    pub tol_gap: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            max_iters: 100,
            tol_stationarity: 1e-9,
            tol_primal: 1e-10,
            tol_gap: 1e-10,
        }
    }
}

impl QpProblem {
    pub fn new(h: DMatrix<f64>, g: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, QpError> {
        let n = g.len();
        if a.ncols() != n && a.nrows() > 0 {
            return Err(QpError::Dimension(format!("A has {} columns, expected {n}", a.ncols())));
        }
        if a.nrows() != b.len() {
            return Err(QpError::Dimension(format!("A has {} rows but b has {}", a.nrows(), b.len())));
        }
        if !(h.is_empty() || (h.nrows() == n && h.ncols() == n)) {
            return Err(QpError::Dimension(format!("H is {}x{}, expected {n}x{n}", h.nrows(), h.ncols())));
        }
        let a = if a.nrows() == 0 { DMatrix::zeros(0, n) } else { a };
        Ok(QpProblem { h, g, a, b })
    }

    pub fn linear(g: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, QpError> {
        QpProblem::new(DMatrix::zeros(0, 0), g, a, b)
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    fn hess_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.h.is_empty() {
            DVector::zeros(x.len())
        } else {
            &self.h * x
        }
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&self.hess_mul(x)) + self.g.dot(x)
    }

    pub fn residuals(&self, x: &DVector<f64>, z: &DVector<f64>) -> KktResiduals {
        let rd = self.hess_mul(x) + &self.g + self.a.transpose() * z;
        let slack = &self.b - &self.a * x;
        let mut primal = 0.0f64;
        let mut comp = 0.0f64;
        let mut dual = 0.0f64;
        for i in 0..slack.len() {
            primal = primal.max(-slack[i]);
            comp = comp.max((z[i] * slack[i]).abs());
            dual = dual.max(-z[i]);
        }
        KktResiduals {
            stationarity: rd.amax(),
            primal_infeasibility: primal.max(0.0),
            complementarity: comp,
            dual_infeasibility: dual.max(0.0),
        }
    }

    pub fn solve(&self) -> Result<QpSolution, QpError> {
        self.solve_with(&QpSettings::default(), None)
    }

    /// Runs the interior point method, optionally warm-starting `x`.
    pub fn solve_with(&self, settings: &QpSettings, x0: Option<&DVector<f64>>) -> Result<QpSolution, QpError> {
        let pairs = self.opposed_pairs();
        if pairs.is_empty() {
            self.interior_point(settings, x0)
        } else {
            self.solve_eliminated(settings, &pairs)
        }
    }

    /// Row pairs `a x <= b`, `-a x <= -b`. Such a zero-width slab has no
    /// interior: the barrier iteration drives both multipliers to infinity
    /// and stalls on rounding error, so these are eliminated as equalities.
    fn opposed_pairs(&self) -> Vec<(usize, usize)> {
        let m = self.b.len();
        let mut used = vec![false; m];
        let mut out = Vec::new();
        for i in 0..m {
            let scale = self.a.row(i).amax();
            if used[i] || scale == 0.0 {
                continue;
            }
            for j in i + 1..m {
                if used[j] {
                    continue;
                }
                let rows = (self.a.row(i) + self.a.row(j)).amax() <= PAIR_TOL * scale;
                let offsets = (self.b[i] + self.b[j]).abs() <= PAIR_TOL * (scale + self.b[i].abs());
                if rows && offsets {
                    used[i] = true;
                    used[j] = true;
                    out.push((i, j));
                    break;
                }
            }
        }
        out
    }

    /// Solves over the affine set `E x = e` of the paired rows as
    /// `x = x_p + N y`, then recovers the pair multipliers by least squares
    /// on the stationarity condition.
    fn solve_eliminated(&self, settings: &QpSettings, pairs: &[(usize, usize)]) -> Result<QpSolution, QpError> {
        let (n, m) = (self.dim(), self.b.len());
        let e = DMatrix::from_fn(pairs.len(), n, |r, c| self.a[(pairs[r].0, c)]);
        let be = DVector::from_fn(pairs.len(), |r, _| self.b[pairs[r].0]);
        let xp = e.clone().svd(true, true).solve(&be, 1e-14).map_err(|_| QpError::Singular)?;
        if (&e * &xp - &be).amax() > settings.tol_primal * (1.0 + be.amax()) {
            return Err(QpError::Infeasible);
        }
        let eig = SymmetricEigen::new(e.transpose() * &e);
        let tol = 1e-10 * (1.0 + eig.eigenvalues.amax());
        let free: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] <= tol).collect();
        let basis = DMatrix::from_fn(n, free.len(), |r, c| eig.eigenvectors[(r, free[c])]);

        let mut paired = vec![false; m];
        for &(i, j) in pairs {
            paired[i] = true;
            paired[j] = true;
        }
        // Remaining rows on the affine set; rows constant there are either
        // implied or violated.
        let mut rows = Vec::new();
        for i in (0..m).filter(|&i| !paired[i]) {
            let row = self.a.row(i);
            let reduced = &row * &basis;
            let rhs = self.b[i] - row.dot(&xp.transpose());
            if reduced.amax() > PAIR_TOL * (1.0 + row.amax()) {
                rows.push((i, reduced, rhs));
            } else if rhs < -settings.tol_primal * (1.0 + self.b[i].abs()) {
                return Err(QpError::Infeasible);
            }
        }
        let k = basis.ncols();
        let (y, zr, iterations) = if k == 0 {
            (DVector::zeros(0), DVector::zeros(0), 0)
        } else {
            let h = if self.h.is_empty() { DMatrix::zeros(0, 0) } else { basis.transpose() * &self.h * &basis };
            let g = basis.transpose() * (self.hess_mul(&xp) + &self.g);
            let a = DMatrix::from_fn(rows.len(), k, |r, c| rows[r].1[c]);
            let b = DVector::from_fn(rows.len(), |r, _| rows[r].2);
            let sol = QpProblem::new(h, g, a, b)?.solve_with(settings, None)?;
            (sol.x, sol.z, sol.iterations)
        };
        let x = &xp + &basis * y;
        let mut z = DVector::zeros(m);
        for (r, (i, _, _)) in rows.iter().enumerate() {
            z[*i] = zr[r];
        }
        let rd = -(self.hess_mul(&x) + &self.g + self.a.transpose() * &z);
        let lambda = e.transpose().svd(true, true).solve(&rd, 1e-14).map_err(|_| QpError::Singular)?;
        for (r, &(i, j)) in pairs.iter().enumerate() {
            z[i] = lambda[r].max(0.0);
            z[j] = (-lambda[r]).max(0.0);
        }
        Ok(self.finish(x, z, iterations))
    }

    fn interior_point(&self, settings: &QpSettings, x0: Option<&DVector<f64>>) -> Result<QpSolution, QpError> {
        let n = self.dim();
        let m = self.b.len();
        let mut x = x0.cloned().unwrap_or_else(|| DVector::zeros(n));
        if m == 0 {
            return self.solve_unconstrained();
        }
        let at = self.a.transpose();
        let ax = &self.a * &x;
        let mut s = DVector::from_fn(m, |i, _| (self.b[i] - ax[i]).max(1.0));
        let mut z = DVector::from_element(m, 1.0);
        let g_scale = 1.0 + self.g.amax();
        let b_scale = 1.0 + self.b.amax();

        let mut last = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
        for iter in 0..settings.max_iters {
            let rd = self.hess_mul(&x) + &self.g + &at * &z;
            let rp = &self.a * &x + &s - &self.b;
            let mu = s.dot(&z) / m as f64;
            let (nd, np) = (rd.amax(), rp.amax());
            last = (np, nd, mu);
            if nd <= settings.tol_stationarity * g_scale && np <= settings.tol_primal * b_scale && mu <= settings.tol_gap {
                return Ok(self.finish(x, z, iter));
            }

            // Reduced Newton matrix H + A' W A with W = Z / S.
            let w = DVector::from_fn(m, |i, _| z[i] / s[i]);
            let mut kmat = DMatrix::zeros(n, n);
            if !self.h.is_empty() {
                kmat += &self.h;
            }
            for i in 0..m {
                let wi = w[i];
                let row = self.a.row(i);
                for c in 0..n {
                    let rc = row[c];
                    if rc == 0.0 {
                        continue;
                    }
                    let f = wi * rc;
                    for r in 0..n {
                        kmat[(r, c)] += f * row[r];
                    }
                }
            }
            let exact = kmat.clone();
            let reg = 1e-13 * (1.0 + kmat.diagonal().amax());
            for i in 0..n {
                kmat[(i, i)] += reg;
            }
            let chol = kmat.cholesky().ok_or(QpError::Singular)?;
            // The regularization can swamp weakly weighted directions once
            // the active set separates, so refine against the exact matrix.
            let ksolve = |rhs: &DVector<f64>| {
                let mut d = chol.solve(rhs);
                for _ in 0..3 {
                    let r = rhs - &exact * &d;
                    d += chol.solve(&r);
                }
                d
            };

            let solve_dir = |rc: &DVector<f64>| {
                // dz = S^-1 (Z rp - rc + Z A dx); ds = -rp - A dx
                let t = DVector::from_fn(m, |i, _| (z[i] * rp[i] - rc[i]) / s[i]);
                let rhs = -&rd - &at * &t;
                let dx = ksolve(&rhs);
                let adx = &self.a * &dx;
                let ds = DVector::from_fn(m, |i, _| -rp[i] - adx[i]);
                let dz = DVector::from_fn(m, |i, _| (-rc[i] - z[i] * ds[i]) / s[i]);
                (dx, ds, dz)
            };

            // Predictor.
            let rc_aff = s.component_mul(&z);
            let (_, ds_a, dz_a) = solve_dir(&rc_aff);
            let alpha_aff = max_step(&s, &ds_a).min(max_step(&z, &dz_a));
            let mu_aff = (&s + alpha_aff * &ds_a).dot(&(&z + alpha_aff * &dz_a)) / m as f64;
            let mut sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
            // Keep mu from collapsing ahead of the residuals: once s and z
            // hit 1e-200 the Newton system is too ill-conditioned to fix them.
            let infeas = (nd / g_scale).max(np / b_scale);
            if infeas > mu {
                sigma = sigma.max((infeas / mu).min(0.5));
            }

            // Corrector.
            let rc = DVector::from_fn(m, |i, _| s[i] * z[i] + ds_a[i] * dz_a[i] - sigma * mu);
            let (dx, ds, dz) = solve_dir(&rc);
            let alpha = (0.995 * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);
            x += alpha * dx;
            s += alpha * ds;
            z += alpha * dz;
            for i in 0..m {
                s[i] = s[i].max(1e-300);
                z[i] = z[i].max(1e-300);
            }
        }
        Err(QpError::NotConverged {
            iters: settings.max_iters,
            primal: last.0,
            dual: last.1,
            gap: last.2,
        })
    }

    fn solve_unconstrained(&self) -> Result<QpSolution, QpError> {
        let n = self.dim();
        if n == 0 {
            return Ok(self.finish(DVector::zeros(0), DVector::zeros(0), 0));
        }
        if self.h.is_empty() {
            return Err(QpError::Singular);
        }
        let chol = self.h.clone().cholesky().ok_or(QpError::Singular)?;
        let x = chol.solve(&(-&self.g));
        Ok(self.finish(x, DVector::zeros(0), 0))
    }

    fn finish(&self, x: DVector<f64>, z: DVector<f64>, iterations: usize) -> QpSolution {
        let kkt = self.residuals(&x, &z);
        QpSolution {
            objective: self.objective(&x),
            x,
            z,
            iterations,
            kkt,
        }
    }
}

/// Largest step in [0, 1/0.995] keeping `v + t dv` nonnegative.
fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    let mut t = 1.0f64 / 0.995;
    for i in 0..v.len() {
        if dv[i] < 0.0 {
            t = t.min(-v[i] / dv[i]);
        }
    }
    t
}
