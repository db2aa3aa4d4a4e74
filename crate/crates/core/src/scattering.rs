//! Direct scattering on the unit circle.
//!
//! For a field supported on `n_min..=n_max` the scattering matrix is the finite product
//!
//! ```text
//! S(z) = z^{-(n_max+1) s3} T_{n_max}(z) ... T_{n_min}(z) z^{n_min s3},
//! T_n(z) = [[z, q_n], [conj(q_n), 1/z]],
//! ```
//!
//! obtained by carrying the free solution `z^{n s3}` across the window from the left.
//! `a = S_11`, `b = S_21`, and the reflection coefficient is `r(lambda) = z b(z) / a(z)`
//! with `lambda = z^2`. Snapshots at time `t` are scattered as if `t` were the origin
//! of time; [`evolve_reflection`] restores the time dependence.

use std::f64::consts::TAU;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::lattice::LatticeField;
use crate::linalg::{cis, Mat2};
use crate::par::{self, Execution};
use crate::{Error, Result};

/// Tolerance on `|z| = 1` for the on-circle entry points.
const UNIT_TOL: f64 = 1e-12;

/// Where `1 - |r|^2` is computed as `ln_1p(-|r|^2)` rather than from `c / |a|^2`.
const DIRECT_LOG_BELOW: f64 = 0.5;

/// One spatial Lax factor `[[z, q], [conj(q), 1/z]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransferMatrix(pub Mat2);

impl TransferMatrix {
    pub fn entries(&self) -> &Mat2 {
        &self.0
    }

    pub fn det(&self) -> Complex64 {
        self.0.det()
    }
}

pub fn transfer_matrix(q: Complex64, z: Complex64) -> Result<TransferMatrix> {
    if z.norm_sqr() == 0.0 || !z.is_finite() {
        return Err(Error::Domain(format!("transfer matrix needs finite nonzero z, got {z}")));
    }
    if !(q.norm() < 1.0) {
        return Err(Error::Domain(format!("transfer matrix needs |q| < 1, got |q| = {}", q.norm())));
    }
    Ok(TransferMatrix(Mat2::new(z, q, q.conj(), z.inv())))
}

/// `z^n` computed from polar form, so that large `|n|` on the circle stays accurate.
fn zpow(z: Complex64, n: i64) -> Complex64 {
    let (rho, arg) = z.to_polar();
    cis(arg * n as f64) * rho.powf(n as f64)
}

/// Scattering matrix of the amplitudes `q` occupying `n_min..`, at any nonzero `z`.
///
/// Carried out in the interaction picture, where site `k` contributes
/// `[[1, q_k z^{-(2k+1)}], [conj(q_k) z^{2k+1}, 1]]`; sites with negligible `q_k`
/// then leave the accumulated product untouched instead of adding rounding error.
fn spatial_product(q: &[Complex64], n_min: i64, z: Complex64) -> Mat2 {
    let (mut a, mut b) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
    let (mut c, mut d) = (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0));
    for (i, &qn) in q.iter().enumerate() {
        if qn.norm_sqr() == 0.0 {
            continue;
        }
        let w = zpow(z, 2 * (n_min + i as i64) + 1);
        let upper = qn / w;
        let lower = qn.conj() * w;
        let (na, nb) = (a + upper * c, b + upper * d);
        let (nc, nd) = (lower * a + c, lower * b + d);
        a = na;
        b = nb;
        c = nc;
        d = nd;
    }
    Mat2::new(a, b, c, d)
}

fn check_unimodular(z: Complex64) -> Result<()> {
    if !z.is_finite() || (z.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::Domain(format!(
            "scattering data is only evaluated on |z| = 1, got |z| = {}",
            z.norm()
        )));
    }
    Ok(())
}

/// Full scattering matrix `S(z)` for `|z| = 1`.
pub fn scattering_matrix(field: &LatticeField, z: Complex64) -> Result<Mat2> {
    check_unimodular(z)?;
    field.check_admissible()?;
    Ok(spatial_product(field.amplitudes(), field.n_min(), z))
}

/// `(a(z), b(z))`, the first column of `S(z)`.
pub fn scattering_coeffs(field: &LatticeField, z: Complex64) -> Result<(Complex64, Complex64)> {
    let s = scattering_matrix(field, z)?;
    Ok((s.get(0, 0), s.get(1, 0)))
}

/// `r(z^2) = z b(z) / a(z)`.
pub fn reflection_coefficient(field: &LatticeField, z: Complex64) -> Result<Complex64> {
    let (a, b) = scattering_coeffs(field, z)?;
    Ok(z * b / a)
}

/// Largest deviation from the circle symmetries `S_22(z) = conj(S_11(1/conj z))`
/// and `S_12(z) = conj(S_21(1/conj z))`, each side computed by its own recursion.
pub fn symmetry_check(field: &LatticeField, z: Complex64) -> Result<f64> {
    let s = scattering_matrix(field, z)?;
    let w = z.conj().inv();
    let sw = spatial_product(field.amplitudes(), field.n_min(), w);
    let d22 = (s.get(1, 1) - sw.get(0, 0).conj()).norm();
    let d12 = (s.get(0, 1) - sw.get(1, 0).conj()).norm();
    Ok(d22.max(d12))
}

/// `|det S(z) - prod (1 - |q_n|^2)|` at `z`.
pub fn det_residual(field: &LatticeField, z: Complex64) -> Result<f64> {
    let s = scattering_matrix(field, z)?;
    let c = window_c_minus_inf(field);
    Ok((s.det() - c).norm())
}

fn window_c_minus_inf(field: &LatticeField) -> f64 {
    field
        .amplitudes()
        .iter()
        .map(|q| (-q.norm_sqr()).ln_1p())
        .sum::<f64>()
        .exp()
}

/// Reflection coefficient and `a` sampled at `lambda_k = e^{i theta_k}`,
/// `theta_k = 2 pi k / N`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReflectionGrid {
    t_ref: f64,
    r: Vec<Complex64>,
    a: Vec<Complex64>,
    c_minus_inf: f64,
    /// `ln(1 - |r_k|^2)`, evaluated without cancellation.
    log_gap: Vec<f64>,
}

impl ReflectionGrid {
    pub fn from_parts(r: Vec<Complex64>, a: Vec<Complex64>, c_minus_inf: f64, t_ref: f64) -> Result<Self> {
        let n = r.len();
        check_grid_size(n)?;
        if a.len() != n {
            return Err(Error::Inconsistent(format!("{n} reflection samples but {} samples of a", a.len())));
        }
        if !(c_minus_inf > 0.0 && c_minus_inf <= 1.0) {
            return Err(Error::Inconsistent(format!("c_minus_inf = {c_minus_inf} not in (0, 1]")));
        }
        if !t_ref.is_finite() {
            return Err(Error::Inconsistent(format!("t_ref = {t_ref} is not finite")));
        }
        for (k, (rk, ak)) in r.iter().zip(&a).enumerate() {
            if !(rk.norm() < 1.0) {
                return Err(Error::Inconsistent(format!(
                    "|r| = {} >= 1 at node {k}; recursion broken or field inadmissible",
                    rk.norm()
                )));
            }
            if !(ak.norm() > 0.0 && ak.is_finite()) {
                return Err(Error::Inconsistent(format!("a = {ak} at node {k}")));
            }
        }
        let log_c = c_minus_inf.ln();
        let log_gap = r
            .iter()
            .zip(&a)
            .map(|(rk, ak)| {
                let m2 = rk.norm_sqr();
                if m2 <= DIRECT_LOG_BELOW {
                    (-m2).ln_1p()
                } else {
                    log_c - 2.0 * ak.norm().ln()
                }
            })
            .collect();
        Ok(ReflectionGrid { t_ref, r, a, c_minus_inf, log_gap })
    }

    /// Grid for prescribed `r` alone, with `c_minus_inf = 1` and the positive `a`
    /// that satisfies `(1 - |r|^2) |a|^2 = 1`.
    pub fn synthetic(r: Vec<Complex64>, t_ref: f64) -> Result<Self> {
        let a = r
            .iter()
            .map(|rk| Complex64::new((1.0 - rk.norm_sqr()).max(f64::MIN_POSITIVE).sqrt().recip(), 0.0))
            .collect();
        Self::from_parts(r, a, 1.0, t_ref)
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn t_ref(&self) -> f64 {
        self.t_ref
    }

    pub fn r(&self) -> &[Complex64] {
        &self.r
    }

    pub fn a(&self) -> &[Complex64] {
        &self.a
    }

    pub fn c_minus_inf(&self) -> f64 {
        self.c_minus_inf
    }

    /// `ln(1 - |r_k|^2)` at every node.
    pub fn log_gap(&self) -> &[f64] {
        &self.log_gap
    }

    pub fn spacing(&self) -> f64 {
        TAU / self.len() as f64
    }

    pub fn theta(&self, k: usize) -> f64 {
        self.spacing() * k as f64
    }

    pub fn thetas(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.theta(k)).collect()
    }

    pub fn sup_r(&self) -> f64 {
        self.r.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max_k |(1 - |r_k|^2) |a_k|^2 - c_minus_inf|`.
    pub fn unitarity_residual(&self) -> f64 {
        self.r
            .iter()
            .zip(&self.a)
            .map(|(r, a)| ((1.0 - r.norm_sqr()) * a.norm_sqr() - self.c_minus_inf).abs())
            .fold(0.0, f64::max)
    }

    /// The same residual with `|a_k|` in place of `|a_k|^2`; only zero when `|a| = 1`.
    pub fn unitarity_residual_first_power(&self) -> f64 {
        self.r
            .iter()
            .zip(&self.a)
            .map(|(r, a)| ((1.0 - r.norm_sqr()) * a.norm() - self.c_minus_inf).abs())
            .fold(0.0, f64::max)
    }

    /// Periodic four-point Lagrange interpolation of `r` at angle `theta`.
    pub fn interp_r(&self, theta: f64) -> Complex64 {
        let (idx, w) = self.stencil(theta);
        idx.iter().zip(w).map(|(&i, wi)| self.r[i] * wi).sum()
    }

    /// Periodic four-point Lagrange interpolation of `ln(1 - |r|^2)`.
    pub fn interp_log_gap(&self, theta: f64) -> f64 {
        let (idx, w) = self.stencil(theta);
        idx.iter().zip(w).map(|(&i, wi)| self.log_gap[i] * wi).sum()
    }

    fn stencil(&self, theta: f64) -> ([usize; 4], [f64; 4]) {
        let n = self.len();
        let u = theta.rem_euclid(TAU) / self.spacing();
        let base = u.floor();
        let x = u - base;
        let i0 = base as i64;
        let idx = [-1i64, 0, 1, 2].map(|d| (i0 + d).rem_euclid(n as i64) as usize);
        let w = [
            -x * (x - 1.0) * (x - 2.0) / 6.0,
            (x + 1.0) * (x - 1.0) * (x - 2.0) / 2.0,
            -(x + 1.0) * x * (x - 2.0) / 2.0,
            (x + 1.0) * x * (x - 1.0) / 6.0,
        ];
        (idx, w)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&GridFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: GridFile = serde_json::from_str(text)?;
        if f.n != f.r.len() {
            return Err(Error::Inconsistent(format!("N = {} but {} reflection samples", f.n, f.r.len())));
        }
        Self::from_parts(f.r, f.a, f.c_minus_inf, f.t_ref)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct GridFile {
    #[serde(rename = "N")]
    n: usize,
    t_ref: f64,
    #[serde(with = "crate::linalg::pairs")]
    r: Vec<Complex64>,
    #[serde(with = "crate::linalg::pairs")]
    a: Vec<Complex64>,
    c_minus_inf: f64,
}

impl From<&ReflectionGrid> for GridFile {
    fn from(g: &ReflectionGrid) -> Self {
        GridFile { n: g.len(), t_ref: g.t_ref, r: g.r.clone(), a: g.a.clone(), c_minus_inf: g.c_minus_inf }
    }
}

pub(crate) fn check_grid_size(n: usize) -> Result<()> {
    if n < 4 || !n.is_power_of_two() {
        return Err(Error::Domain(format!("grid size must be a power of two >= 4, got {n}")));
    }
    Ok(())
}

/// Tolerated `|(1 - |r|^2)|a|^2 - c|` per unit of `|a|^2` when a grid is built from a
/// field. The left side is `|a|^2 - |b|^2`, whose rounding error grows like
/// `eps |a|^2` times the number of active sites, so this only catches a broken recursion.
const UNITARITY_SANITY: f64 = 1e-8;

pub fn reflection_grid(field: &LatticeField, n: usize) -> Result<ReflectionGrid> {
    reflection_grid_with(field, n, Execution::default())
}

pub fn reflection_grid_with(field: &LatticeField, n: usize, exec: Execution) -> Result<ReflectionGrid> {
    check_grid_size(n)?;
    field.check_admissible()?;
    let q = field.amplitudes();
    let n_min = field.n_min();
    let cols = par::map_range(n, exec, |k| {
        let z = cis(TAU * k as f64 / n as f64 / 2.0);
        let s = spatial_product(q, n_min, z);
        (s.get(0, 0), z * s.get(1, 0) / s.get(0, 0))
    });
    let (a, r): (Vec<_>, Vec<_>) = cols.into_iter().unzip();
    let c = window_c_minus_inf(field);
    let grid = ReflectionGrid::from_parts(r, a, c, field.time())?;
    for (k, (rk, ak)) in grid.r.iter().zip(&grid.a).enumerate() {
        let a2 = ak.norm_sqr();
        let dev = (1.0 - rk.norm_sqr()) * a2 - c;
        if !(dev.abs() <= UNITARITY_SANITY * a2.max(1.0)) {
            return Err(Error::Inconsistent(format!(
                "(1 - |r|^2)|a|^2 deviates from c_minus_inf by {dev:e} at node {k} (|a|^2 = {a2:e})"
            )));
        }
    }
    Ok(grid)
}

/// `r_k -> r_k exp(2i (cos theta_k - 1) t)`; `t` is the elapsed time added to `t_ref`.
pub fn evolve_reflection(grid: &ReflectionGrid, t: f64) -> Result<ReflectionGrid> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("evolution time must be finite and non-negative, got {t}")));
    }
    let mut out = grid.clone();
    for (k, rk) in out.r.iter_mut().enumerate() {
        let theta = grid.theta(k);
        *rk *= cis(2.0 * (theta.cos() - 1.0) * t);
    }
    out.t_ref = grid.t_ref + t;
    Ok(out)
}
