//! Reconstruction of `q_n(t)` from the reflection coefficient through the
//! Riemann–Hilbert problem on the unit circle.
//!
//! The jump `V = [[1 - |r|^2, -conj(r) e^{-it phi}], [r e^{it phi}, 1]]` is split as
//! `V = (I - w_-)^{-1} (I + w_+)` with
//!
//! ```text
//! w_- = [[0, A], [0, 0]],  A = -conj(r E)
//! w_+ = [[0, 0], [B, 0]],  B = r E,          E = e^{it phi} = lambda^{-n} e^{2i (t - t_ref)(cos theta - 1)}
//! ```
//!
//! and the Beals–Coifman density `mu = I + C_+(mu w_-) + C_-(mu w_+)` is found row by
//! row. Writing row `rho` as `(u, v)`, the second component is eliminated through
//! `v = delta_{rho 2} + C_+(A u)`, leaving one `N x N` system
//!
//! ```text
//! u - C_-(B C_+(A u)) = delta_{rho 1} + delta_{rho 2} C_-(B)
//! ```
//!
//! solved densely (LU plus one refinement step) up to `N = 2048` and by restarted
//! GMRES beyond. Then `M(0) = I - mean(mu (w_+ + w_-))` and `q_n(t) = M_12(0, n+1, t)`.

use faer::complex_native::c64;
use faer::prelude::SpSolver;
use faer::Mat;
use num_complex::Complex64;

use crate::cauchy::{CauchyProjector, Side};
use crate::linalg::{cis, Mat2};
use crate::par::{self, Execution};
use crate::scattering::ReflectionGrid;
use crate::{Error, Result};

/// Above this grid size the density equation is solved iteratively.
pub const DENSE_LIMIT: usize = 2048;

/// Minimum grid points per unit of the jump's Fourier bandwidth `2|t - t_ref| + |n|`.
pub const OSCILLATION_BUDGET: f64 = 8.0;

/// Residuals above this fail the solve outright.
const RESIDUAL_LIMIT: f64 = 1e-6;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Triangular jump factors on the grid for one `(n, t)`.
#[derive(Clone, Debug)]
pub struct JumpData {
    pub n: i64,
    pub t: f64,
    /// `e^{it phi(lambda_k, n, t)}`, unimodular.
    pub exponent: Vec<Complex64>,
    /// Corner of `w_-`: `-conj(r_k) e^{-it phi_k}`.
    pub upper: Vec<Complex64>,
    /// Corner of `w_+`: `r_k e^{it phi_k}`.
    pub lower: Vec<Complex64>,
}

impl JumpData {
    pub fn len(&self) -> usize {
        self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upper.is_empty()
    }

    pub fn w_minus(&self, k: usize) -> Mat2 {
        Mat2::new(ZERO, self.upper[k], ZERO, ZERO)
    }

    pub fn w_plus(&self, k: usize) -> Mat2 {
        Mat2::new(ZERO, ZERO, self.lower[k], ZERO)
    }

    /// `(I - w_-)^{-1} (I + w_+)` at node `k`.
    pub fn factored_jump(&self, k: usize) -> Mat2 {
        let left = (Mat2::IDENTITY - self.w_minus(k)).inverse().expect("unipotent matrix is invertible");
        left * (Mat2::IDENTITY + self.w_plus(k))
    }
}

/// `V_k` written out directly from `r` and the exponent.
pub fn jump_matrix(grid: &ReflectionGrid, jump: &JumpData, k: usize) -> Mat2 {
    let r = grid.r()[k];
    let e = jump.exponent[k];
    Mat2::new(ONE * (1.0 - r.norm_sqr()), -(r * e).conj(), r * e, ONE)
}

pub fn build_jump(grid: &ReflectionGrid, n: i64, t: f64) -> Result<JumpData> {
    if !t.is_finite() {
        return Err(Error::Domain(format!("time must be finite, got {t}")));
    }
    if !(grid.sup_r() < 1.0) {
        return Err(Error::Domain("jump needs |r| < 1 at every node".into()));
    }
    let elapsed = t - grid.t_ref();
    let mut exponent = Vec::with_capacity(grid.len());
    let mut upper = Vec::with_capacity(grid.len());
    let mut lower = Vec::with_capacity(grid.len());
    for (k, &r) in grid.r().iter().enumerate() {
        let theta = grid.theta(k);
        let e = cis(2.0 * elapsed * (theta.cos() - 1.0) - n as f64 * theta);
        debug_assert!((e.norm() - 1.0).abs() < 1e-14);
        exponent.push(e);
        upper.push(-(r * e).conj());
        lower.push(r * e);
    }
    Ok(JumpData { n, t, exponent, upper, lower })
}

#[derive(Clone, Debug)]
pub struct BealsCoifmanSolve {
    /// Density at every node; row `rho` is the solution for the `rho`-th unit row.
    pub mu: Vec<Mat2>,
    pub m_at_zero: Mat2,
    /// `max_k |((1 - C_w) mu - I)_k|`.
    pub residual: f64,
    /// Cheap lower estimate of the 1-norm condition number of the reduced operator.
    pub condition: f64,
    pub iterative: bool,
}

impl BealsCoifmanSolve {
    pub fn det_deviation(&self) -> f64 {
        (self.m_at_zero.det() - 1.0).norm()
    }
}

/// Solves many `(n, t)` problems on one reflection grid.
#[derive(Clone, Debug)]
pub struct RhSolver {
    grid: ReflectionGrid,
    projector: CauchyProjector,
    /// `C_+` applied to the delta at node 0; `C_+` is circulant.
    plus_column: Vec<Complex64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reconstruction {
    pub n: i64,
    pub t: f64,
    pub q: Complex64,
    pub residual: f64,
    pub det_deviation: f64,
}

impl RhSolver {
    pub fn new(grid: ReflectionGrid) -> Result<Self> {
        let projector = CauchyProjector::new(grid.len())?;
        let mut delta = vec![ZERO; grid.len()];
        delta[0] = ONE;
        let plus_column = projector.plus(&delta);
        Ok(RhSolver { grid, projector, plus_column })
    }

    pub fn grid(&self) -> &ReflectionGrid {
        &self.grid
    }

    /// Refuse `(n, t)` whose jump oscillates faster than the grid resolves.
    pub fn check_resolution(&self, n: i64, t: f64) -> Result<()> {
        let bandwidth = 2.0 * (t - self.grid.t_ref()).abs() + n.unsigned_abs() as f64;
        let needed = OSCILLATION_BUDGET * bandwidth;
        if (self.grid.len() as f64) < needed {
            return Err(Error::Resolution(format!(
                "N = {} cannot resolve the jump at n = {n}, t = {t}: need N >= {needed:.0}",
                self.grid.len()
            )));
        }
        Ok(())
    }

    pub fn solve(&self, n: i64, t: f64) -> Result<BealsCoifmanSolve> {
        self.check_resolution(n, t)?;
        let jump = build_jump(&self.grid, n, t)?;
        self.solve_jump(&jump)
    }

    pub fn solve_jump(&self, jump: &JumpData) -> Result<BealsCoifmanSolve> {
        let len = self.grid.len();
        if jump.len() != len {
            return Err(Error::Domain(format!("jump has {} nodes, grid has {len}", jump.len())));
        }
        let (a, b) = (&jump.upper, &jump.lower);
        let p = &self.projector;

        let rhs1 = vec![ONE; len];
        let rhs2 = p.minus(b);
        let (sols, condition, iterative) = if len <= DENSE_LIMIT {
            let (s, c) = self.dense_solve(a, b, [&rhs1, &rhs2])?;
            (s, c, false)
        } else {
            let s1 = gmres(|x| self.apply_reduced(a, b, x), &rhs1)?;
            let s2 = gmres(|x| self.apply_reduced(a, b, x), &rhs2)?;
            ([s1, s2], f64::NAN, true)
        };

        // recover v for each row, then M(0)
        let mut mu = vec![Mat2::ZERO; len];
        let mut m0 = Mat2::IDENTITY;
        let mut residual: f64 = 0.0;
        for (rho, u) in sols.iter().enumerate() {
            let au: Vec<Complex64> = u.iter().zip(a).map(|(x, y)| x * y).collect();
            let mut v = p.plus(&au);
            if rho == 1 {
                v.iter_mut().for_each(|x| *x += ONE);
            }
            for k in 0..len {
                mu[k].0[rho][0] = u[k];
                mu[k].0[rho][1] = v[k];
            }
            let mean_vb: Complex64 = v.iter().zip(b).map(|(x, y)| x * y).sum::<Complex64>() / len as f64;
            let mean_ua: Complex64 = au.iter().sum::<Complex64>() / len as f64;
            m0.0[rho][0] -= mean_vb;
            m0.0[rho][1] -= mean_ua;

            // full residual of both components
            let vb: Vec<Complex64> = v.iter().zip(b).map(|(x, y)| x * y).collect();
            let cmv = p.minus(&vb);
            let delta1 = if rho == 0 { ONE } else { ZERO };
            for k in 0..len {
                residual = residual.max((u[k] - delta1 - cmv[k]).norm());
            }
        }

        if !(residual <= RESIDUAL_LIMIT) || !m0.is_finite() {
            return Err(Error::Solver {
                message: format!("Beals-Coifman residual {residual:e} exceeds {RESIDUAL_LIMIT:e}"),
                condition,
            });
        }
        Ok(BealsCoifmanSolve { mu, m_at_zero: m0, residual, condition, iterative })
    }

    /// `x - C_-(B C_+(A x))`.
    fn apply_reduced(&self, a: &[Complex64], b: &[Complex64], x: &[Complex64]) -> Vec<Complex64> {
        let mut w: Vec<Complex64> = x.iter().zip(a).map(|(x, a)| x * a).collect();
        self.projector.apply_in_place(Side::Plus, &mut w);
        w.iter_mut().zip(b).for_each(|(w, b)| *w *= b);
        self.projector.apply_in_place(Side::Minus, &mut w);
        x.iter().zip(&w).map(|(x, w)| x - w).collect()
    }

    fn dense_solve(
        &self,
        a: &[Complex64],
        b: &[Complex64],
        rhs: [&Vec<Complex64>; 2],
    ) -> Result<([Vec<Complex64>; 2], f64)> {
        let len = a.len();
        let mut op = Mat::<c64>::zeros(len, len);
        let mut col = vec![ZERO; len];
        for j in 0..len {
            // column j of C_- diag(B) C_+ diag(A)
            for (i, c) in col.iter_mut().enumerate() {
                *c = b[i] * a[j] * self.plus_column[(i + len - j) % len];
            }
            self.projector.apply_in_place(Side::Minus, &mut col);
            for (i, c) in col.iter().enumerate() {
                let diag = if i == j { 1.0 } else { 0.0 };
                op.write(i, j, c64::new(diag - c.re, -c.im));
            }
        }
        let norm1 = (0..len)
            .map(|j| (0..len).map(|i| op.read(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max);

        let lu = op.partial_piv_lu();
        let mut b_mat = Mat::<c64>::zeros(len, 2);
        for (c, r) in rhs.iter().enumerate() {
            for i in 0..len {
                b_mat.write(i, c, c64::new(r[i].re, r[i].im));
            }
        }
        let mut x = lu.solve(&b_mat);
        // one step of iterative refinement
        let resid = &b_mat - &op * &x;
        x += lu.solve(&resid);

        let mut inv_growth: f64 = 0.0;
        let mut out: [Vec<Complex64>; 2] = [Vec::new(), Vec::new()];
        for c in 0..2 {
            out[c] = (0..len).map(|i| {
                let v = x.read(i, c);
                Complex64::new(v.re, v.im)
            })
            .collect();
            let xn: f64 = out[c].iter().map(|z| z.norm()).sum();
            let bn: f64 = rhs[c].iter().map(|z| z.norm()).sum();
            if bn > 0.0 {
                inv_growth = inv_growth.max(xn / bn);
            }
            if out[c].iter().any(|z| !z.is_finite()) {
                return Err(Error::Solver { message: "singular reduced operator".into(), condition: f64::INFINITY });
            }
        }
        Ok((out, norm1 * inv_growth))
    }

    pub fn reconstruct(&self, n: i64, t: f64) -> Result<Reconstruction> {
        let sol = self.solve(n + 1, t)?;
        Ok(Reconstruction {
            n,
            t,
            q: sol.m_at_zero.get(0, 1),
            residual: sol.residual,
            det_deviation: sol.det_deviation(),
        })
    }

    /// Reconstructions for every `n` in `ns` at time `t`, in input order.
    pub fn reconstruct_many(&self, ns: &[i64], t: f64, exec: Execution) -> Result<Vec<Reconstruction>> {
        par::try_map_range(ns.len(), exec, |i| self.reconstruct(ns[i], t))
    }
}

pub fn solve_beals_coifman(grid: &ReflectionGrid, jump: &JumpData) -> Result<BealsCoifmanSolve> {
    RhSolver::new(grid.clone())?.solve_jump(jump)
}

/// `q_n(t) = M_12(0, n + 1, t)`.
pub fn reconstruct_q(grid: &ReflectionGrid, n: i64, t: f64) -> Result<Complex64> {
    Ok(RhSolver::new(grid.clone())?.reconstruct(n, t)?.q)
}

const GMRES_RESTART: usize = 60;
const GMRES_MAX_ITERS: usize = 3000;
const GMRES_TOL: f64 = 1e-13;

/// Restarted GMRES with modified Gram–Schmidt and Givens rotations.
fn gmres(op: impl Fn(&[Complex64]) -> Vec<Complex64>, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
    let len = rhs.len();
    let norm = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let dot = |x: &[Complex64], y: &[Complex64]| x.iter().zip(y).map(|(a, b)| a.conj() * b).sum::<Complex64>();
    let bnorm = norm(rhs);
    let mut x = vec![ZERO; len];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut iters = 0;
    loop {
        let ax = op(&x);
        let r: Vec<Complex64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = norm(&r);
        if beta <= GMRES_TOL * bnorm {
            return Ok(x);
        }
        if iters >= GMRES_MAX_ITERS {
            return Err(Error::Solver {
                message: format!("GMRES stalled at relative residual {:e}", beta / bnorm),
                condition: f64::NAN,
            });
        }
        let mut basis: Vec<Vec<Complex64>> = vec![r.iter().map(|z| z / beta).collect()];
        let mut h = vec![vec![ZERO; GMRES_RESTART]; GMRES_RESTART + 1];
        let mut cs = vec![ZERO; GMRES_RESTART];
        let mut sn = vec![ZERO; GMRES_RESTART];
        let mut g = vec![ZERO; GMRES_RESTART + 1];
        g[0] = Complex64::new(beta, 0.0);
        let mut k_used = 0;
        for k in 0..GMRES_RESTART {
            iters += 1;
            let mut w = op(&basis[k]);
            for (i, v) in basis.iter().enumerate() {
                let hik = dot(v, &w);
                h[i][k] = hik;
                w.iter_mut().zip(v).for_each(|(w, v)| *w -= hik * v);
            }
            let wn = norm(&w);
            h[k + 1][k] = Complex64::new(wn, 0.0);
            for i in 0..k {
                let tmp = cs[i].conj() * h[i][k] + sn[i].conj() * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = tmp;
            }
            let (hk, hk1) = (h[k][k], h[k + 1][k]);
            let rnorm = (hk.norm_sqr() + hk1.norm_sqr()).sqrt();
            cs[k] = hk / rnorm;
            sn[k] = hk1 / rnorm;
            h[k][k] = Complex64::new(rnorm, 0.0);
            h[k + 1][k] = ZERO;
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k].conj() * g[k];
            k_used = k + 1;
            if g[k + 1].norm() <= GMRES_TOL * bnorm || wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|z| z / wn).collect());
        }
        let mut y = vec![ZERO; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            x.iter_mut().zip(&basis[j]).for_each(|(x, v)| *x += yj * v);
        }
    }
}
