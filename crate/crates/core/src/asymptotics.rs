//! Long-time asymptotics: the Zakharov–Manakov leading term for `|xi| < 1` and the
//! fast-decay envelope for `|xi| > 1`, `xi = n / 2t`.
//!
//! Two branch conventions are used, each for one purpose. Angles on the circle
//! (`arg lambda` inside the phase, `arg S_j`, the integration arc) live in
//! `[0, 2 pi)`. Complex powers `w^{i nu}` use the principal logarithm.
//!
//! The integration arc from `S_2` to `S_1` is the arc through `-i`: with
//! `theta_1 = arg S_1` and `theta_2 = arg S_2` (lifted above `theta_1` when needed)
//! it is `theta in [theta_1, theta_2]`, traversed clockwise from `S_2` to `S_1`.
//! For `xi > 0` this is the arc not containing `lambda = 1`; for `xi < 0` it is the
//! arc that does contain it (see [`PhaseGeometry::convention_dependent`]).
//!
//! [`zm_predict`] assembles
//!
//! ```text
//! q_n(t) ~ (i / sqrt 2) t^{-1/2} (1 - xi^2)^{-1/4} / delta_inv(0) * sum_j kappa_j delta_{j0}^2 [M_1^j]_12
//! ```
//!
//! with `kappa_1 = S_1`, `kappa_2 = i S_2` and
//! `delta_{j0} = e^{alpha_j - (it/2) phi_j} (beta_j / (S_2 - S_1))^{(-1)^{j-1} i nu_j}`.
//! This is the form that reproduces direct simulation. The uncorrected expression
//! (prefactor `i/2`, multiplied by `delta_inv(0)`, base `(-1)^{j-1} beta_j / (S_1 - S_2)`,
//! no `kappa_j`) is also evaluated and reported as `q_pred_uncorrected`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::Serialize;

use crate::linalg::cis;
use crate::scattering::ReflectionGrid;
use crate::special::log_gamma;
use crate::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Minimum number of grid nodes strictly inside the integration arc.
pub const MIN_ARC_NODES: usize = 16;

/// Graded subpanels in each endpoint cell of the arc.
pub const ENDPOINT_PANELS: usize = 64;

const GL_NODES: [f64; 4] = [0.183_434_642_495_649_78, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_2];
const GL_WEIGHTS: [f64; 4] = [0.362_683_783_378_361_77, 0.313_706_645_877_887_05, 0.222_381_034_453_374_34, 0.101_228_536_290_376_69];

/// `theta` reduced to `[0, 2 pi)`.
pub fn arg_2pi(z: Complex64) -> f64 {
    let a = z.arg();
    let a = if a < 0.0 { a + TAU } else { a };
    if a >= TAU {
        0.0
    } else {
        a
    }
}

/// `phi(lambda) = lambda + 1/lambda + 2 i xi log lambda - 2` with `arg lambda in [0, 2 pi)`.
pub fn phase(lambda: Complex64, xi: f64) -> Result<Complex64> {
    if lambda.norm_sqr() == 0.0 || !lambda.is_finite() {
        return Err(Error::Domain(format!("phase is undefined at lambda = {lambda}")));
    }
    let log = Complex64::new(lambda.norm().ln(), arg_2pi(lambda));
    Ok(lambda + lambda.inv() + 2.0 * I * xi * log - 2.0)
}

fn check_sector(xi: f64) -> Result<()> {
    if !(xi.abs() < 1.0) {
        return Err(Error::Domain(format!("stationary points leave the circle for |xi| = {} >= 1", xi.abs())));
    }
    Ok(())
}

/// `S_j = -i xi + (-1)^j sqrt(1 - xi^2)`, returned as `(S_1, S_2)`.
pub fn stationary_points(xi: f64) -> Result<(Complex64, Complex64)> {
    check_sector(xi)?;
    let root = (1.0 - xi * xi).sqrt();
    Ok((Complex64::new(-root, -xi), Complex64::new(root, -xi)))
}

fn point(xi: f64, j: usize) -> Result<Complex64> {
    let (s1, s2) = stationary_points(xi)?;
    match j {
        1 => Ok(s1),
        2 => Ok(s2),
        _ => Err(Error::Domain(format!("stationary point index must be 1 or 2, got {j}"))),
    }
}

/// `phi(S_j) = 2((-1)^j sqrt(1 - xi^2) - xi arg S_j - 1)`.
pub fn phi_at_s(xi: f64, j: usize) -> Result<f64> {
    let s = point(xi, j)?;
    let sign = if j == 1 { -1.0 } else { 1.0 };
    Ok(2.0 * (sign * (1.0 - xi * xi).sqrt() - xi * arg_2pi(s) - 1.0))
}

/// `nu = -ln(1 - |r|^2) / 2 pi`.
pub fn nu(r_at_s: Complex64) -> Result<f64> {
    let m2 = r_at_s.norm_sqr();
    if !(m2 < 1.0) {
        return Err(Error::Domain(format!("nu needs |r| < 1, got {}", m2.sqrt())));
    }
    Ok(-(-m2).ln_1p() / TAU)
}

/// `[M_1]_12 = -i sqrt(2 pi) e^{i pi/4} e^{-pi nu/2} / (r Gamma(-i nu))`.
pub fn m1_entry(nu: f64, r_at_s: Complex64) -> Result<Complex64> {
    if r_at_s.norm_sqr() == 0.0 {
        return Err(Error::Domain("model coefficient has r(S_j) in the denominator; r(S_j) = 0".into()));
    }
    if !(nu.is_finite() && nu >= 0.0) {
        return Err(Error::Domain(format!("nu must be finite and non-negative, got {nu}")));
    }
    if nu == 0.0 {
        // 1 / Gamma(0) = 0
        return Ok(Complex64::new(0.0, 0.0));
    }
    let lg = log_gamma(Complex64::new(0.0, -nu))?;
    let log_mag = 0.5 * TAU.ln() - 0.5 * PI * nu - lg;
    Ok(-I * cis(PI / 4.0) * log_mag.exp() / r_at_s)
}

/// Envelope scale `1/t` of the fast-decay region `|n / 2t| > 1`.
pub fn fast_region_scale(n: i64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    let xi = n as f64 / (2.0 * t);
    if !(xi.abs() > 1.0) {
        return Err(Error::WrongRegion { xi, expected: "|xi| > 1" });
    }
    Ok(1.0 / t)
}

/// Integration arc `[theta_1, theta_2]` with a quadrature rule aligned to the grid cells.
#[derive(Clone, Debug)]
pub struct Arc {
    pub theta1: f64,
    pub theta2: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Arc {
    pub fn new(grid: &ReflectionGrid, xi: f64) -> Result<Self> {
        let (s1, s2) = stationary_points(xi)?;
        let theta1 = arg_2pi(s1);
        let mut theta2 = arg_2pi(s2);
        if theta2 <= theta1 {
            theta2 += TAU;
        }
        let h = grid.spacing();
        let first = (theta1 / h).floor() as i64 + 1;
        let last = (theta2 / h).ceil() as i64 - 1;
        let inside = (last - first + 1).max(0) as usize;
        if inside < MIN_ARC_NODES {
            return Err(Error::Resolution(format!(
                "only {inside} grid nodes inside the arc [{theta1:.4}, {theta2:.4}]; need {MIN_ARC_NODES}"
            )));
        }
        let mut breaks: Vec<f64> = Vec::with_capacity(inside + 2 * ENDPOINT_PANELS);
        // graded towards theta_1 inside the first cell
        let head = first as f64 * h - theta1;
        for k in 0..ENDPOINT_PANELS {
            let x = k as f64 / ENDPOINT_PANELS as f64;
            breaks.push(theta1 + head * x * x);
        }
        for m in first..=last {
            breaks.push(m as f64 * h);
        }
        // graded towards theta_2 inside the last cell
        let tail = theta2 - last as f64 * h;
        for k in (0..ENDPOINT_PANELS).rev() {
            let x = k as f64 / ENDPOINT_PANELS as f64;
            breaks.push(theta2 - tail * x * x);
        }
        breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-15);
        let mut nodes = Vec::with_capacity(8 * breaks.len());
        let mut weights = Vec::with_capacity(8 * breaks.len());
        for w in breaks.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            if half <= 0.0 {
                continue;
            }
            for (x, wt) in GL_NODES.iter().zip(GL_WEIGHTS) {
                nodes.push(mid - half * x);
                weights.push(half * wt);
                nodes.push(mid + half * x);
                weights.push(half * wt);
            }
        }
        Ok(Arc { theta1, theta2, nodes, weights })
    }

    pub fn length(&self) -> f64 {
        self.theta2 - self.theta1
    }

    /// `int_{theta_1}^{theta_2} g(theta) d theta`.
    pub fn integrate(&self, g: impl Fn(f64) -> Complex64) -> Complex64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| g(x) * w).sum()
    }
}

/// Stationary-phase data for one ray at one time.
#[derive(Clone, Debug, Serialize)]
pub struct PhaseGeometry {
    pub xi: f64,
    pub t: f64,
    #[serde(rename = "S")]
    pub s: [Complex64; 2],
    /// `arg S_j` as used on the arc (`theta_2` may exceed `2 pi`).
    pub arg_s: [f64; 2],
    pub nu: [f64; 2],
    pub phi: [f64; 2],
    pub beta: [Complex64; 2],
    /// Interpolated `r(S_j)`.
    pub r_at_s: [Complex64; 2],
    /// Set for `xi < 0`, where the arc through `-i` contains `lambda = 1`.
    pub convention_dependent: bool,
}

impl PhaseGeometry {
    pub fn new(grid: &ReflectionGrid, xi: f64, t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!("time must be positive and finite, got {t}")));
        }
        let (s1, s2) = stationary_points(xi)?;
        let theta1 = arg_2pi(s1);
        let mut theta2 = arg_2pi(s2);
        if theta2 <= theta1 {
            theta2 += TAU;
        }
        let scale = t.powf(-0.5) * (1.0 - xi * xi).powf(-0.25) / 2.0;
        let arg_s = [theta1, theta2];
        let nu_at = |theta: f64| (-grid.interp_log_gap(theta) / TAU).max(0.0);
        Ok(PhaseGeometry {
            xi,
            t,
            s: [s1, s2],
            arg_s,
            nu: [nu_at(theta1), nu_at(theta2)],
            phi: [phi_at_s(xi, 1)?, phi_at_s(xi, 2)?],
            beta: [I * scale * s1, I * scale * s2],
            r_at_s: [grid.interp_r(theta1), grid.interp_r(theta2)],
            convention_dependent: xi < 0.0,
        })
    }
}

/// `delta^{-1}(0)` in its usual stated form, i.e. the exponential of
/// `(1/2 pi i) int_{S_2}^{S_1} s^{-1} ln(1 - |r(s)|^2) ds`, which is real and `>= 1`.
/// The same exponential is `delta(0)` under the defining integral of `delta`;
/// [`zm_predict`] multiplies by its reciprocal.
pub fn delta0_inv(grid: &ReflectionGrid, xi: f64) -> Result<Complex64> {
    let arc = Arc::new(grid, xi)?;
    Ok(delta0_inv_on(grid, &arc))
}

fn delta0_inv_on(grid: &ReflectionGrid, arc: &Arc) -> Complex64 {
    // ds = i s d theta and the path runs from theta_2 down to theta_1
    let integral = -arc.integrate(|theta| {
        let s = cis(theta);
        s.inv() * grid.interp_log_gap(theta) * I * s
    });
    (integral / (I * TAU)).exp()
}

/// `alpha_j(S_j) = (1/2 pi i) int_{S_2}^{S_1} (f(s) - f(S_j)) / (s - S_j) ds`,
/// `f = ln(1 - |r|^2)`.
pub fn alpha_at_s(grid: &ReflectionGrid, xi: f64, j: usize) -> Result<Complex64> {
    let arc = Arc::new(grid, xi)?;
    let sj = point(xi, j)?;
    let theta_j = if j == 1 { arc.theta1 } else { arc.theta2 };
    Ok(alpha_on(grid, &arc, sj, theta_j))
}

fn alpha_on(grid: &ReflectionGrid, arc: &Arc, sj: Complex64, theta_j: f64) -> Complex64 {
    let fj = grid.interp_log_gap(theta_j);
    let integral = -arc.integrate(|theta| {
        let s = cis(theta);
        (grid.interp_log_gap(theta) - fj) / (s - sj) * I * s
    });
    integral / (I * TAU)
}

#[derive(Clone, Debug, Serialize)]
pub struct ZmPrediction {
    pub n: i64,
    pub t: f64,
    pub geometry: PhaseGeometry,
    /// Stated value of `delta^{-1}(0)`, `>= 1`.
    pub delta0_inv: Complex64,
    /// Factor actually used in `q_pred`: `1 / delta0_inv`.
    pub delta_factor: Complex64,
    pub alpha: [Complex64; 2],
    pub delta_j0: [Complex64; 2],
    /// `delta_{j0}` with the uncorrected base, `(-1)^{j-1} beta_j / (S_1 - S_2)`.
    pub delta_j0_uncorrected: [Complex64; 2],
    /// `[M_1^j]_12`; zero for a dropped term.
    pub m1: [Complex64; 2],
    /// Terms dropped because `r(S_j) = 0`.
    pub dropped: [bool; 2],
    pub q_pred: Complex64,
    pub q_pred_uncorrected: Complex64,
    /// `t^{-3/4}`.
    pub error_scale: f64,
}

/// Leading-order prediction of `q_n(t)` from a reflection grid taken at `t = 0`.
pub fn zm_predict(grid: &ReflectionGrid, n: i64, t: f64) -> Result<ZmPrediction> {
    if grid.t_ref() != 0.0 {
        return Err(Error::Domain(format!(
            "prediction needs the reflection coefficient at t = 0, grid is at t = {}",
            grid.t_ref()
        )));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time must be positive and finite, got {t}")));
    }
    let xi = n as f64 / (2.0 * t);
    if !(xi.abs() < 1.0) {
        return Err(Error::WrongRegion { xi, expected: "|xi| < 1" });
    }
    let geometry = PhaseGeometry::new(grid, xi, t)?;
    let arc = Arc::new(grid, xi)?;
    let delta0_inv = delta0_inv_on(grid, &arc);
    let delta_factor = delta0_inv.inv();
    let [s1, s2] = geometry.s;
    let kappa = [s1, I * s2];

    let mut alpha = [Complex64::new(0.0, 0.0); 2];
    let mut delta_j0 = alpha;
    let mut delta_j0_uncorrected = alpha;
    let mut m1 = alpha;
    let mut dropped = [false; 2];
    let mut sum = Complex64::new(0.0, 0.0);
    let mut sum_uncorrected = Complex64::new(0.0, 0.0);
    for j in 0..2 {
        let sign = if j == 0 { 1.0 } else { -1.0 };
        let nu_j = geometry.nu[j];
        alpha[j] = alpha_on(grid, &arc, geometry.s[j], geometry.arg_s[j]);
        let common = (alpha[j] - I * (t / 2.0) * geometry.phi[j]).exp();
        let base = geometry.beta[j] / (s2 - s1);
        let base_uncorrected = geometry.beta[j] * sign / (s1 - s2);
        delta_j0[j] = common * (sign * I * nu_j * base.ln()).exp();
        delta_j0_uncorrected[j] = common * (sign * I * nu_j * base_uncorrected.ln()).exp();

        let r = geometry.r_at_s[j];
        if r.norm() == 0.0 || nu_j <= 0.0 {
            dropped[j] = true;
            continue;
        }
        // modulus tied to nu so that |m1| = sqrt(nu) holds exactly
        let r_consistent = r / r.norm() * (-(-TAU * nu_j).exp_m1()).sqrt();
        m1[j] = m1_entry(nu_j, r_consistent)?;
        sum += kappa[j] * delta_j0[j] * delta_j0[j] * m1[j];
        sum_uncorrected += delta_j0_uncorrected[j] * delta_j0_uncorrected[j] * m1[j];
    }
    let scale = t.powf(-0.5) * (1.0 - xi * xi).powf(-0.25);
    let q_pred = I * std::f64::consts::FRAC_1_SQRT_2 * scale * delta_factor * sum;
    let q_pred_uncorrected = I * 0.5 * scale * delta0_inv * sum_uncorrected;
    Ok(ZmPrediction {
        n,
        t,
        geometry,
        delta0_inv,
        delta_factor,
        alpha,
        delta_j0,
        delta_j0_uncorrected,
        m1,
        dropped,
        q_pred,
        q_pred_uncorrected,
        error_scale: t.powf(-0.75),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeField;
    use crate::scattering::reflection_grid;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn constant_modulus(rho: f64, n: usize) -> ReflectionGrid {
        let r = (0..n).map(|k| cis(0.3 + TAU * k as f64 / n as f64) * rho).collect();
        ReflectionGrid::synthetic(r, 0.0).unwrap()
    }

    #[test]
    fn phase_values() {
        assert!(phase(c(1.0, 0.0), 0.7).unwrap().norm() <= 1e-15);
        assert!((phase(c(-1.0, 0.0), 0.0).unwrap() - c(-4.0, 0.0)).norm() <= 1e-15);
        assert!(phase(c(0.0, 0.0), 0.1).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..64 {
            let theta: f64 = rng.gen_range(0.0..TAU);
            let p = phase(cis(theta), 0.3).unwrap();
            let expected = 2.0 * theta.cos() - 2.0 * 0.3 * theta - 2.0;
            assert!((p - c(expected, 0.0)).norm() <= 1e-12);
        }
    }

    #[test]
    fn stationary_point_values() {
        let (s1, s2) = stationary_points(0.0).unwrap();
        assert_eq!((s1, s2), (c(-1.0, 0.0), c(1.0, 0.0)));
        let (s1, s2) = stationary_points(0.6).unwrap();
        assert!((s1 - c(-0.8, -0.6)).norm() <= 1e-15);
        assert!((s2 - c(0.8, -0.6)).norm() <= 1e-15);
        assert!(stationary_points(1.0).is_err());
        assert!(stationary_points(-1.2).is_err());
    }

    #[test]
    fn phi_at_stationary_points() {
        assert_eq!(phi_at_s(0.0, 2).unwrap(), 0.0);
        assert!((phi_at_s(0.0, 1).unwrap() + 4.0).abs() <= 1e-15);
        assert!((phi_at_s(0.0, 1).unwrap() - phase(c(-1.0, 0.0), 0.0).unwrap().re).abs() <= 1e-15);
        for j in 1..=2 {
            let s = point(0.6, j).unwrap();
            assert!((phi_at_s(0.6, j).unwrap() - phase(s, 0.6).unwrap().re).abs() <= 1e-12);
        }
        assert!(phi_at_s(0.2, 3).is_err());
    }

    #[test]
    fn nu_values() {
        assert_eq!(nu(c(0.0, 0.0)).unwrap(), 0.0);
        let r = (1.0 - (-TAU).exp()).sqrt();
        assert!((nu(c(r, 0.0)).unwrap() - 1.0).abs() <= 1e-12);
        assert!((nu(c(0.5, 0.0)).unwrap() - 0.045_786_023_869_621_704).abs() <= 1e-15);
        assert!(nu(c(1.0, 0.0)).is_err());
    }

    #[test]
    fn model_coefficient() {
        let rho = 0.5;
        let v = nu(c(rho, 0.0)).unwrap();
        let m = m1_entry(v, c(rho, 0.0)).unwrap();
        // 30-digit reference
        assert!((m - c(-0.155_244_142_700_111_31, -0.147_259_227_306_573_83)).norm() <= 1e-13);
        let tiny = c(1e-6, 0.0);
        assert!(m1_entry(nu(tiny).unwrap(), tiny).unwrap().norm() <= 1e-2);
        assert!(m1_entry(0.1, c(0.0, 0.0)).is_err());
    }

    #[test]
    fn fast_region() {
        assert_eq!(fast_region_scale(300, 100.0).unwrap(), 0.01);
        assert!(matches!(fast_region_scale(100, 100.0), Err(Error::WrongRegion { .. })));
    }

    #[test]
    fn delta_trivial_and_constant_modulus() {
        let zero = ReflectionGrid::synthetic(vec![c(0.0, 0.0); 256], 0.0).unwrap();
        assert!((delta0_inv(&zero, 0.0).unwrap() - 1.0).norm() <= 1e-15);
        let g = constant_modulus(0.5, 256);
        let d = delta0_inv(&g, 0.0).unwrap();
        assert!((d - c(1.154_700_538_379_251_5, 0.0)).norm() <= 1e-12);
        // arc length for xi = 0.6: from arg S_1 to arg S_2 through -i
        let arc = Arc::new(&g, 0.6).unwrap();
        let expected = 0.75f64.powf(-arc.length() / TAU);
        assert!((delta0_inv(&g, 0.6).unwrap() - expected).norm() <= 1e-12);
    }

    #[test]
    fn arc_orientation() {
        let g = constant_modulus(0.1, 64);
        let arc = Arc::new(&g, 0.0).unwrap();
        assert_eq!((arc.theta1, arc.theta2), (PI, TAU));
        for xi in [0.5, -0.5] {
            let arc = Arc::new(&g, xi).unwrap();
            assert!(arc.theta1 < 1.5 * PI && 1.5 * PI < arc.theta2);
        }
        // integrates smooth functions exactly enough
        let arc = Arc::new(&g, 0.3).unwrap();
        let got = arc.integrate(|x| c(x.cos(), 0.0));
        let expected = arc.theta2.sin() - arc.theta1.sin();
        assert!((got.re - expected).abs() <= 1e-13);
    }

    #[test]
    fn under_resolved_arc() {
        let g = constant_modulus(0.1, 16);
        assert!(matches!(delta0_inv(&g, 0.0), Err(Error::Resolution(_))));
    }

    #[test]
    fn alpha_vanishes_for_constant_modulus() {
        let zero = ReflectionGrid::synthetic(vec![c(0.0, 0.0); 128], 0.0).unwrap();
        assert_eq!(alpha_at_s(&zero, 0.2, 1).unwrap().norm(), 0.0);
        let f = LatticeField::single_site(0, c(0.4, -0.1), 3).unwrap();
        let g = reflection_grid(&f, 256).unwrap();
        for j in 1..=2 {
            assert!(alpha_at_s(&g, 0.35, j).unwrap().norm() <= 1e-8);
        }
    }

    #[test]
    fn zero_reflection_predicts_zero() {
        let zero = ReflectionGrid::synthetic(vec![c(0.0, 0.0); 256], 0.0).unwrap();
        let p = zm_predict(&zero, 10, 100.0).unwrap();
        assert_eq!(p.q_pred.norm(), 0.0);
        assert_eq!(p.dropped, [true, true]);
        assert_eq!(p.error_scale, 100f64.powf(-0.75));
    }

    #[test]
    fn prediction_region_and_time_checks() {
        let g = constant_modulus(0.3, 256);
        assert!(matches!(zm_predict(&g, 250, 100.0), Err(Error::WrongRegion { .. })));
        assert!(zm_predict(&g, 0, 0.0).is_err());
        let shifted = crate::scattering::evolve_reflection(&g, 1.0).unwrap();
        assert!(zm_predict(&shifted, 0, 10.0).is_err());
    }

    #[test]
    fn quadrature_converges_under_refinement() {
        let f = LatticeField::gaussian(0.3, 3.0, 30).unwrap();
        let coarse = reflection_grid(&f, 256).unwrap();
        let fine = reflection_grid(&f, 512).unwrap();
        let finer = reflection_grid(&f, 1024).unwrap();
        for xi in [0.0, 0.4] {
            let d1 = (delta0_inv(&coarse, xi).unwrap() - delta0_inv(&fine, xi).unwrap()).norm();
            let d2 = (delta0_inv(&fine, xi).unwrap() - delta0_inv(&finer, xi).unwrap()).norm();
            assert!(d2 <= d1 / 3.0 || d2 <= 1e-12, "xi = {xi}: {d1:e} -> {d2:e}");
            let a1 = (alpha_at_s(&coarse, xi, 2).unwrap() - alpha_at_s(&fine, xi, 2).unwrap()).norm();
            let a2 = (alpha_at_s(&fine, xi, 2).unwrap() - alpha_at_s(&finer, xi, 2).unwrap()).norm();
            assert!(a2 <= a1 / 3.0 || a2 <= 1e-12, "xi = {xi}: {a1:e} -> {a2:e}");
        }
    }

    #[test]
    fn linear_limit_matches_bessel_asymptotics() {
        // small single site: q_0(t) = c (i^0) J_0(2t) e^{2it} up to O(c^3)
        let cval = 1e-3;
        let f = LatticeField::single_site(0, c(cval, 0.0), 2).unwrap();
        let g = reflection_grid(&f, 512).unwrap();
        let t = 400.0;
        let p = zm_predict(&g, 0, t).unwrap();
        // |J_0(2t)| envelope is 1/sqrt(pi t)
        let envelope = cval / (PI * t).sqrt();
        assert!((p.q_pred.norm() / envelope) < 1.0 + 1e-6);
        let cfg = crate::lattice::SimConfig { dt: 0.02, t_end: t, record_every: 1_000_000, ..Default::default() };
        let wide = LatticeField::single_site(0, c(cval, 0.0), (2.0 * t) as i64 + 200).unwrap();
        let sim = crate::lattice::simulate(&wide, &cfg).unwrap();
        let q = sim.final_state().value(0);
        assert!((q - p.q_pred).norm() <= 0.05 * envelope, "sim {q} vs pred {}", p.q_pred);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn stationary_points_on_circle(xi in -0.999f64..0.999) {
            let (s1, s2) = stationary_points(xi).unwrap();
            for s in [s1, s2] {
                prop_assert!((s.norm() - 1.0).abs() <= 1e-12);
                prop_assert!((-2.0 * arg_2pi(s).sin() - 2.0 * xi).abs() <= 1e-12);
            }
            for j in 1..=2 {
                let s = point(xi, j).unwrap();
                prop_assert!((phi_at_s(xi, j).unwrap() - phase(s, xi).unwrap().re).abs() <= 1e-12);
            }
        }

        #[test]
        fn model_coefficient_modulus(rho in 0.01f64..0.99, arg in 0.0f64..TAU) {
            let r = cis(arg) * rho;
            let v = nu(r).unwrap();
            prop_assert!((m1_entry(v, r).unwrap().norm() - v.sqrt()).abs() <= 1e-10);
        }

        #[test]
        fn delta_real_and_at_least_one(seed in 0u64..10_000, xi in -0.9f64..0.9) {
            let f = LatticeField::random(seed, 5, 0.8, 6).unwrap();
            let g = reflection_grid(&f, 256).unwrap();
            let d = delta0_inv(&g, xi).unwrap();
            prop_assert!(d.im.abs() <= 1e-10);
            prop_assert!(d.re >= 1.0 - 1e-10);
        }

        #[test]
        fn term_moduli(seed in 0u64..10_000, n in -30i64..30) {
            let f = LatticeField::random(seed, 4, 0.6, 6).unwrap();
            let g = reflection_grid(&f, 256).unwrap();
            let t = 50.0;
            let p = zm_predict(&g, n, t).unwrap();
            let xi = p.geometry.xi;
            let scale = t.powf(-0.5) * (1.0 - xi * xi).powf(-0.25);
            let mut bound = 0.0;
            let mut bound_uncorrected = 0.0;
            for j in 0..2 {
                let nu_j = p.geometry.nu[j];
                // |delta_{j0}|^2 / delta_inv(0) = 1, so each term has modulus sqrt(nu_j)
                let term = (p.delta_factor * p.delta_j0[j] * p.delta_j0[j] * p.m1[j]).norm();
                if !p.dropped[j] {
                    prop_assert!((term - nu_j.sqrt()).abs() <= 1e-8 * (1.0 + nu_j.sqrt()));
                }
                bound += nu_j.sqrt();
                bound_uncorrected += p.delta_j0_uncorrected[j].norm_sqr() * nu_j.sqrt();
            }
            prop_assert!(p.q_pred.norm() <= std::f64::consts::FRAC_1_SQRT_2 * scale * bound * (1.0 + 1e-12));
            prop_assert!(p.q_pred_uncorrected.norm() <= 0.5 * scale * p.delta0_inv.norm() * bound_uncorrected * (1.0 + 1e-12));
        }
    }
}
