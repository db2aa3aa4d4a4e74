//! Finite-window integration of the defocusing Ablowitz–Ladik lattice.
//!
//! The field lives on a window `n_min..=n_max` and is taken to vanish identically
//! outside it. Time stepping is classical fourth-order Runge–Kutta; the product
//! `c_{-inf} = prod (1 - |q_n|^2)` is a constant of motion and is monitored through
//! [`conserved_log_mass`] rather than enforced.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::cis;
use crate::{Error, Result};

/// Fields with some `|q_n|` at or above this bound are rejected.
pub const ADMISSIBILITY_BOUND: f64 = 1.0 - 1e-9;

/// Default bound on the window-edge amplitudes before a truncation warning is raised.
pub const DEFAULT_TRUNCATION_TOL: f64 = 1e-12;

/// A finite window of lattice amplitudes `q_{n_min} ..= q_{n_max}` at time `time`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeField {
    n_min: i64,
    amplitudes: Vec<Complex64>,
    time: f64,
}

impl LatticeField {
    pub fn new(n_min: i64, amplitudes: Vec<Complex64>, time: f64) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::Domain("lattice window must contain at least one site".into()));
        }
        if !time.is_finite() {
            return Err(Error::Domain(format!("time stamp must be finite, got {time}")));
        }
        let field = LatticeField { n_min, amplitudes, time };
        field.check_admissible()?;
        Ok(field)
    }

    /// All-zero field on `n_min..=n_max`.
    pub fn zeros(n_min: i64, n_max: i64) -> Result<Self> {
        Self::from_fn(n_min, n_max, |_| Complex64::new(0.0, 0.0))
    }

    pub fn from_fn(n_min: i64, n_max: i64, f: impl FnMut(i64) -> Complex64) -> Result<Self> {
        if n_max < n_min {
            return Err(Error::Domain(format!("empty window {n_min}..={n_max}")));
        }
        Self::new(n_min, (n_min..=n_max).map(f).collect(), 0.0)
    }

    /// `q_n = amplitude * exp(-(n/width)^2)` on `|n| <= half_window`.
    pub fn gaussian(amplitude: f64, width: f64, half_window: i64) -> Result<Self> {
        Self::from_fn(-half_window, half_window, |n| {
            let x = n as f64 / width;
            Complex64::new(amplitude * (-x * x).exp(), 0.0)
        })
    }

    /// A single nonzero site `q_{site} = value` inside `|n| <= half_window`.
    pub fn single_site(site: i64, value: Complex64, half_window: i64) -> Result<Self> {
        if site.abs() > half_window {
            return Err(Error::Domain(format!("site {site} outside |n| <= {half_window}")));
        }
        Self::from_fn(-half_window, half_window, |n| {
            if n == site {
                value
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// Seeded random field: uniform modulus in `[0, max_modulus)` and uniform phase
    /// on `|n| <= support`, zero elsewhere in `|n| <= half_window`.
    pub fn random(seed: u64, support: i64, max_modulus: f64, half_window: i64) -> Result<Self> {
        if !(0.0..1.0).contains(&max_modulus) {
            return Err(Error::Domain(format!("max_modulus {max_modulus} not in [0, 1)")));
        }
        if support > half_window || support < 0 {
            return Err(Error::Domain(format!(
                "support {support} must lie in 0..={half_window}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::from_fn(-half_window, half_window, |n| {
            if n.abs() <= support {
                let m: f64 = rng_uniform(&mut rng) * max_modulus;
                let phase: f64 = rng_uniform(&mut rng) * std::f64::consts::TAU;
                cis(phase) * m
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    pub fn n_min(&self) -> i64 {
        self.n_min
    }

    pub fn n_max(&self) -> i64 {
        self.n_min + self.amplitudes.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// `q_n`, or zero outside the window.
    pub fn value(&self, n: i64) -> Complex64 {
        if n < self.n_min || n > self.n_max() {
            Complex64::new(0.0, 0.0)
        } else {
            self.amplitudes[(n - self.n_min) as usize]
        }
    }

    /// `(n, q_n)` pairs across the window.
    pub fn sites(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        self.amplitudes
            .iter()
            .enumerate()
            .map(move |(i, &q)| (self.n_min + i as i64, q))
    }

    pub fn sup_modulus(&self) -> f64 {
        self.amplitudes.iter().map(|q| q.norm()).fold(0.0, f64::max)
    }

    /// Larger of the two window-edge amplitudes.
    pub fn edge_modulus(&self) -> f64 {
        let first = self.amplitudes[0].norm();
        let last = self.amplitudes[self.amplitudes.len() - 1].norm();
        first.max(last)
    }

    pub fn check_admissible(&self) -> Result<()> {
        check_admissible(self.n_min, &self.amplitudes)
    }

    /// The field multiplied by the unimodular constant `e^{i gamma}`.
    pub fn with_phase(&self, gamma: f64) -> LatticeField {
        let u = cis(gamma);
        LatticeField {
            n_min: self.n_min,
            amplitudes: self.amplitudes.iter().map(|&q| q * u).collect(),
            time: self.time,
        }
    }

    pub fn with_time(mut self, time: f64) -> LatticeField {
        self.time = time;
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&FieldFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: FieldFile = serde_json::from_str(text)?;
        LatticeField::new(file.n_min, file.q, file.t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

fn rng_uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen::<f64>()
}

fn check_admissible(n_min: i64, q: &[Complex64]) -> Result<()> {
    let bound2 = ADMISSIBILITY_BOUND * ADMISSIBILITY_BOUND;
    for (i, z) in q.iter().enumerate() {
        let m2 = z.norm_sqr();
        // NaN must fail here too
        if !(m2 < bound2) {
            return Err(Error::Inadmissible { site: n_min + i as i64, modulus: m2.sqrt() });
        }
    }
    Ok(())
}

/// JSON form of a field: `{ "n_min": int, "q": [[re, im], ...] }`, with an optional
/// time stamp `"t"` (omitted when zero).
#[derive(Debug, Serialize, Deserialize)]
struct FieldFile {
    n_min: i64,
    #[serde(with = "crate::linalg::pairs")]
    q: Vec<Complex64>,
    #[serde(default, skip_serializing_if = "is_zero")]
    t: f64,
}

fn is_zero(t: &f64) -> bool {
    *t == 0.0
}

impl From<&LatticeField> for FieldFile {
    fn from(f: &LatticeField) -> Self {
        FieldFile { n_min: f.n_min, q: f.amplitudes.clone(), t: f.time }
    }
}

/// Time derivative of every window site, with zero exterior.
pub fn al_rhs(field: &LatticeField) -> Result<Vec<Complex64>> {
    field.check_admissible()?;
    let mut out = vec![Complex64::new(0.0, 0.0); field.len()];
    rhs_into(&field.amplitudes, &mut out);
    Ok(out)
}

/// `dq_n/dt = -i [ (1 - |q_n|^2)(q_{n+1} + q_{n-1}) - 2 q_n ]`.
fn rhs_into(q: &[Complex64], out: &mut [Complex64]) {
    let len = q.len();
    let zero = Complex64::new(0.0, 0.0);
    for i in 0..len {
        let left = if i > 0 { q[i - 1] } else { zero };
        let right = if i + 1 < len { q[i + 1] } else { zero };
        let qi = q[i];
        let v = (right + left) * (1.0 - qi.norm_sqr()) - qi * 2.0;
        // multiply by -i
        out[i] = Complex64::new(v.im, -v.re);
    }
}

/// Reusable RK4 stage buffers.
struct Rk4 {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    stage: Vec<Complex64>,
}

impl Rk4 {
    fn new(len: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); len];
        Rk4 { k1: z.clone(), k2: z.clone(), k3: z.clone(), k4: z.clone(), stage: z }
    }

    fn step(&mut self, q: &mut [Complex64], dt: f64) {
        let half = 0.5 * dt;
        rhs_into(q, &mut self.k1);
        for (s, (&x, &k)) in self.stage.iter_mut().zip(q.iter().zip(&self.k1)) {
            *s = x + k * half;
        }
        rhs_into(&self.stage, &mut self.k2);
        for (s, (&x, &k)) in self.stage.iter_mut().zip(q.iter().zip(&self.k2)) {
            *s = x + k * half;
        }
        rhs_into(&self.stage, &mut self.k3);
        for (s, (&x, &k)) in self.stage.iter_mut().zip(q.iter().zip(&self.k3)) {
            *s = x + k * dt;
        }
        rhs_into(&self.stage, &mut self.k4);
        let w = dt / 6.0;
        for i in 0..q.len() {
            q[i] += (self.k1[i] + (self.k2[i] + self.k3[i]) * 2.0 + self.k4[i]) * w;
        }
    }
}

/// One RK4 step of size `dt`.
pub fn step(field: &LatticeField, dt: f64) -> Result<LatticeField> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("time step must be positive and finite, got {dt}")));
    }
    field.check_admissible()?;
    let mut q = field.amplitudes.clone();
    Rk4::new(q.len()).step(&mut q, dt);
    let time = field.time + dt;
    check_after_step(field.n_min, &q, time)?;
    Ok(LatticeField { n_min: field.n_min, amplitudes: q, time })
}

fn check_after_step(n_min: i64, q: &[Complex64], time: f64) -> Result<()> {
    check_admissible(n_min, q).map_err(|e| match e {
        Error::Inadmissible { site, modulus } => Error::Domain(format!(
            "admissibility lost at t = {time}: |q_{site}| = {modulus} (step too large or blow-up)"
        )),
        other => other,
    })
}

/// `sum_n ln(1 - |q_n|^2)` over the window, i.e. `ln c_{-inf}` up to truncation.
pub fn conserved_log_mass(field: &LatticeField) -> Result<f64> {
    field.check_admissible()?;
    Ok(log_mass(&field.amplitudes))
}

fn log_mass(q: &[Complex64]) -> f64 {
    q.iter().map(|z| (-z.norm_sqr()).ln_1p()).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Nominal step; steps are shortened only to land exactly on record times.
    pub dt: f64,
    /// Absolute final time.
    pub t_end: f64,
    /// Record a snapshot every this many nominal steps.
    pub record_every: usize,
    pub truncation_tol: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { dt: 0.01, t_end: 1.0, record_every: 100, truncation_tol: DEFAULT_TRUNCATION_TOL }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive and finite, got {}", self.dt)));
        }
        if !self.t_end.is_finite() || !(self.dt * self.t_end).is_finite() {
            return Err(Error::Config(format!("t_end must be finite, got {}", self.t_end)));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if !(self.truncation_tol >= 0.0) {
            return Err(Error::Config("truncation_tol must be non-negative".into()));
        }
        Ok(())
    }
}

/// Result of a simulation run.
#[derive(Clone, Debug)]
pub struct Simulation {
    /// Initial state, then each recorded state; the last one is at `t_end`.
    pub snapshots: Vec<LatticeField>,
    /// Largest `|L(t) - L(t_0)|` over the snapshots, `L` = [`conserved_log_mass`].
    pub log_mass_drift: f64,
    /// Largest window-edge amplitude seen in any snapshot.
    pub max_edge_modulus: f64,
    pub truncation_tol: f64,
    pub steps: usize,
}

impl Simulation {
    pub fn final_state(&self) -> &LatticeField {
        self.snapshots.last().expect("simulation always records its initial state")
    }

    pub fn truncation_warning(&self) -> bool {
        self.max_edge_modulus > self.truncation_tol
    }

    /// Snapshot whose time stamp equals `t` to within `1e-9` relative.
    pub fn at_time(&self, t: f64) -> Option<&LatticeField> {
        self.snapshots
            .iter()
            .find(|s| (s.time - t).abs() <= 1e-9 * t.abs().max(1.0))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_snapshots_csv(&self.snapshots, out)
    }
}

/// Integrate to `config.t_end`, recording every `record_every` steps and at `t_end`.
pub fn simulate(field: &LatticeField, config: &SimConfig) -> Result<Simulation> {
    config.validate()?;
    let t0 = field.time;
    if config.t_end < t0 {
        return Err(Error::Config(format!(
            "t_end = {} precedes the field time stamp {t0}",
            config.t_end
        )));
    }
    let stride = config.dt * config.record_every as f64;
    let mut times = Vec::new();
    let mut k = 1usize;
    loop {
        let t = t0 + stride * k as f64;
        if t >= config.t_end - 1e-9 * stride {
            break;
        }
        times.push(t);
        k += 1;
    }
    times.push(config.t_end);
    simulate_to_times(field, config.dt, &times, config.truncation_tol)
}

/// Integrate through the ascending absolute `times`, recording a snapshot at each.
///
/// Between consecutive targets the interval is split into the fewest equal steps
/// not exceeding `dt`, so targets on the `dt` lattice are reached with steps of
/// exactly `dt`.
pub fn simulate_to_times(
    field: &LatticeField,
    dt: f64,
    times: &[f64],
    truncation_tol: f64,
) -> Result<Simulation> {
    simulate_observed(field, dt, times, truncation_tol, |_| Ok(()))
}

/// As [`simulate_to_times`], additionally handing every recorded snapshot to `observe`.
pub fn simulate_observed(
    field: &LatticeField,
    dt: f64,
    times: &[f64],
    truncation_tol: f64,
    mut observe: impl FnMut(&LatticeField) -> Result<()>,
) -> Result<Simulation> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("dt must be positive and finite, got {dt}")));
    }
    field.check_admissible()?;
    let mut prev = field.time;
    for &t in times {
        if !t.is_finite() || t < prev {
            return Err(Error::Config(format!(
                "record times must be finite, ascending and not before {}",
                field.time
            )));
        }
        prev = t;
    }

    let mass0 = log_mass(&field.amplitudes);
    let mut drift: f64 = 0.0;
    let mut max_edge = field.edge_modulus();
    let mut steps = 0usize;
    let mut q = field.amplitudes.clone();
    let mut rk = Rk4::new(q.len());
    let mut t = field.time;
    let mut snapshots = vec![field.clone()];
    observe(field)?;

    for &target in times {
        let span = target - t;
        if span > 0.0 {
            let n = ((span / dt) - 1e-9).ceil().max(1.0) as usize;
            let h = span / n as f64;
            for i in 1..=n {
                rk.step(&mut q, h);
                let now = if i == n { target } else { t + h * i as f64 };
                check_after_step(field.n_min, &q, now)?;
            }
            steps += n;
        }
        t = target;
        let snap = LatticeField { n_min: field.n_min, amplitudes: q.clone(), time: t };
        drift = drift.max((log_mass(&q) - mass0).abs());
        let edge = snap.edge_modulus();
        if edge > truncation_tol && edge > max_edge {
            log::warn!(
                "window edge amplitude {edge:e} exceeds truncation tolerance {truncation_tol:e} at t = {t}"
            );
        }
        max_edge = max_edge.max(edge);
        observe(&snap)?;
        snapshots.push(snap);
    }

    Ok(Simulation {
        snapshots,
        log_mass_drift: drift,
        max_edge_modulus: max_edge,
        truncation_tol,
        steps,
    })
}

/// CSV rows `t, n, re, im` (with header) for every site of every snapshot.
pub fn write_snapshots_csv<W: Write>(snapshots: &[LatticeField], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "n", "re", "im"])?;
    for snap in snapshots {
        for (n, q) in snap.sites() {
            w.write_record(&[
                snap.time.to_string(),
                n.to_string(),
                q.re.to_string(),
                q.im.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Right-hand side written out term by term from
    /// `i q_t = q_{n+1} - 2 q_n + q_{n-1} - |q_n|^2 (q_{n+1} + q_{n-1})`.
    fn reference_rhs(field: &LatticeField) -> Vec<Complex64> {
        let i = c(0.0, 1.0);
        (field.n_min()..=field.n_max())
            .map(|n| {
                let qp = field.value(n + 1);
                let q = field.value(n);
                let qm = field.value(n - 1);
                let abs2 = q.re * q.re + q.im * q.im;
                let bracket = qp - q * 2.0 + qm - (qp + qm) * abs2;
                bracket / i
            })
            .collect()
    }

    #[test]
    fn rhs_of_zero_field_is_zero() {
        let f = LatticeField::zeros(-5, 5).unwrap();
        assert!(al_rhs(&f).unwrap().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn rhs_single_site() {
        let cval = c(0.3, -0.2);
        let f = LatticeField::single_site(0, cval, 3).unwrap();
        let d = al_rhs(&f).unwrap();
        // i dq_0/dt = -2c  and  i dq_{+-1}/dt = c
        assert_abs_diff_eq!((d[3] - c(0.0, 2.0) * cval).norm(), 0.0, epsilon = 1e-16);
        assert_abs_diff_eq!((d[2] + c(0.0, 1.0) * cval).norm(), 0.0, epsilon = 1e-16);
        assert_abs_diff_eq!((d[4] + c(0.0, 1.0) * cval).norm(), 0.0, epsilon = 1e-16);
        assert_eq!(d[0].norm(), 0.0);
    }

    #[test]
    fn rhs_matches_term_by_term_reference() {
        let f = LatticeField::random(11, 30, 0.5, 40).unwrap();
        let fast = al_rhs(&f).unwrap();
        let slow = reference_rhs(&f);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() <= 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn inadmissible_field_rejected() {
        let err = LatticeField::new(0, vec![c(0.5, 0.0), c(1.0, 0.0)], 0.0).unwrap_err();
        assert!(matches!(err, Error::Inadmissible { site: 1, .. }));
        assert!(LatticeField::new(0, vec![c(f64::NAN, 0.0)], 0.0).is_err());
        // margin below 1
        assert!(LatticeField::new(0, vec![c(1.0 - 1e-10, 0.0)], 0.0).is_err());
    }

    #[test]
    fn zero_field_stays_zero() {
        let f = LatticeField::zeros(-3, 3).unwrap();
        let s = step(&f, 0.1).unwrap();
        assert_eq!(s.time(), 0.1);
        assert!(s.amplitudes().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn nonpositive_step_rejected() {
        let f = LatticeField::zeros(-3, 3).unwrap();
        assert!(step(&f, 0.0).is_err());
        assert!(step(&f, -1e-3).is_err());
    }

    #[test]
    fn single_step_matches_refined_reference() {
        let f = LatticeField::single_site(0, c(0.3, 0.0), 10).unwrap();
        let coarse = step(&f, 1e-3).unwrap();
        let mut fine = f.clone();
        for _ in 0..100 {
            fine = step(&fine, 1e-5).unwrap();
        }
        assert!((coarse.value(0) - fine.value(0)).norm() <= 1e-12);
    }

    #[test]
    fn one_step_log_mass_drift_is_tiny() {
        let f = LatticeField::gaussian(0.3, 20.0, 200).unwrap();
        let s = step(&f, 0.01).unwrap();
        let d = conserved_log_mass(&s).unwrap() - conserved_log_mass(&f).unwrap();
        assert!(d.abs() <= 1e-12, "drift {d}");
    }

    #[test]
    fn log_mass_values() {
        assert_eq!(conserved_log_mass(&LatticeField::zeros(-2, 2).unwrap()).unwrap(), 0.0);
        let f = LatticeField::single_site(0, c(0.5, 0.0), 2).unwrap();
        assert_abs_diff_eq!(conserved_log_mass(&f).unwrap(), 0.75f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(0.75f64.ln(), -0.287_682_072_451_780_9, epsilon = 1e-15);
    }

    #[test]
    fn single_site_decays_and_conserves() {
        let f = LatticeField::single_site(0, c(0.3, 0.0), 120).unwrap();
        let cfg = SimConfig { dt: 0.01, t_end: 20.0, record_every: 200, ..Default::default() };
        let sim = simulate(&f, &cfg).unwrap();
        assert!(sim.log_mass_drift <= 1e-8, "drift {}", sim.log_mass_drift);
        assert!(sim.final_state().value(0).norm() < 0.1);
        assert_abs_diff_eq!(sim.final_state().time(), 20.0, epsilon = 1e-12);
        assert!(!sim.truncation_warning());
        assert_eq!(sim.steps, 2000);
        assert_eq!(sim.snapshots.len(), 11);
    }

    #[test]
    fn zero_field_simulation() {
        let f = LatticeField::zeros(-4, 4).unwrap();
        let cfg = SimConfig { dt: 0.05, t_end: 1.0, record_every: 3, ..Default::default() };
        let sim = simulate(&f, &cfg).unwrap();
        // 20 steps at stride 3 -> 6 interior records plus t_end plus the initial state
        assert_eq!(sim.snapshots.len(), 8);
        assert!(sim
            .snapshots
            .iter()
            .all(|s| s.amplitudes().iter().all(|z| z.norm() == 0.0)));
        assert_eq!(sim.log_mass_drift, 0.0);
    }

    #[test]
    fn edge_warning_raised_for_narrow_window() {
        let f = LatticeField::single_site(0, c(0.3, 0.0), 5).unwrap();
        let cfg = SimConfig { dt: 0.01, t_end: 5.0, record_every: 100, ..Default::default() };
        let sim = simulate(&f, &cfg).unwrap();
        assert!(sim.truncation_warning());
    }

    #[test]
    fn gauge_covariance() {
        let f = LatticeField::random(3, 8, 0.6, 40).unwrap();
        let gamma = 0.83;
        let cfg = SimConfig { dt: 0.01, t_end: 2.0, record_every: 50, ..Default::default() };
        let a = simulate(&f, &cfg).unwrap();
        let b = simulate(&f.with_phase(gamma), &cfg).unwrap();
        let u = cis(gamma);
        for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
            for (x, y) in sa.amplitudes().iter().zip(sb.amplitudes()) {
                assert!((x * u - y).norm() <= 1e-10);
            }
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let f = LatticeField::gaussian(0.4, 3.0, 40).unwrap();
        let t_end = 2.0;
        let run = |dt: f64| {
            let cfg = SimConfig { dt, t_end, record_every: 1_000_000, ..Default::default() };
            simulate(&f, &cfg).unwrap().final_state().clone()
        };
        let reference = run(0.0025);
        let err = |s: &LatticeField| {
            s.amplitudes()
                .iter()
                .zip(reference.amplitudes())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
        };
        let e1 = err(&run(0.1));
        let e2 = err(&run(0.05));
        let ratio = e1 / e2;
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio} ({e1:e}, {e2:e})");
    }

    #[test]
    fn record_times_are_hit_exactly() {
        let f = LatticeField::gaussian(0.2, 3.0, 30).unwrap();
        let sim = simulate_to_times(&f, 0.01, &[0.5, 0.733, 1.0], 1e-12).unwrap();
        let times: Vec<f64> = sim.snapshots.iter().map(|s| s.time()).collect();
        assert_eq!(times, vec![0.0, 0.5, 0.733, 1.0]);
        assert!(sim.at_time(0.733).is_some());
        assert!(simulate_to_times(&f, 0.01, &[1.0, 0.5], 1e-12).is_err());
    }

    #[test]
    fn bad_configs_rejected() {
        let f = LatticeField::zeros(-1, 1).unwrap();
        let mut cfg = SimConfig::default();
        cfg.record_every = 0;
        assert!(simulate(&f, &cfg).is_err());
        let cfg = SimConfig { dt: -1.0, ..Default::default() };
        assert!(simulate(&f, &cfg).is_err());
        let cfg = SimConfig { t_end: -1.0, ..Default::default() };
        assert!(simulate(&f, &cfg).is_err());
    }

    #[test]
    fn json_round_trip_and_schema() {
        let f = LatticeField::new(-2, vec![c(0.1, 0.2), c(0.0, 0.0), c(-0.3, 0.05)], 0.0).unwrap();
        let text = f.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["n_min"], -2);
        assert_eq!(v["q"][0][1], 0.2);
        assert!(v.get("t").is_none());
        assert_eq!(LatticeField::from_json(&text).unwrap(), f);
        assert!(LatticeField::from_json(r#"{"n_min": 0, "q": [[1.5, 0.0]]}"#).is_err());
    }

    #[test]
    fn csv_rows() {
        let f = LatticeField::new(4, vec![c(0.1, -0.2), c(0.0, 0.5)], 1.5).unwrap();
        let mut buf = Vec::new();
        write_snapshots_csv(&[f], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,n,re,im\n1.5,4,0.1,-0.2\n1.5,5,0,0.5\n");
    }
}
