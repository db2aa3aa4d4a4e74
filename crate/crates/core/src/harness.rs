//! Experiments that run several pipelines on one field and cross-check them.
//!
//! Rays are given as `xi = n / 2t`. For each requested time the site index is
//! snapped to the nearest integer `n`, and both the requested and the realized `xi`
//! are reported. Rays with `|xi| < 1` are compared against the Zakharov–Manakov
//! prediction, rays with `|xi| > 1` against the `1/t` envelope, and `|xi| = 1` is
//! rejected.
//!
//! Every output is a deterministic function of the configuration: randomized
//! fields carry their seed, results are collected in input order, and no clock or
//! environment data is written.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{fast_region_scale, zm_predict};
use crate::lattice::{simulate_to_times, LatticeField, DEFAULT_TRUNCATION_TOL};
use crate::par::{self, Execution};
use crate::rh::RhSolver;
use crate::scattering::{evolve_reflection, reflection_grid_with, ReflectionGrid};
use crate::{Error, Result};

/// Minimum number of usable samples for a decay fit.
pub const MIN_FIT_SAMPLES: usize = 5;

/// `|xi|` this close to 1 counts as the excluded transition edge.
pub const EDGE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    /// `amplitude * exp(-(n/width)^2)` on `|n| <= half_window`.
    Gaussian { amplitude: f64, width: f64, half_window: i64 },
    SingleSite { site: i64, value: [f64; 2], half_window: i64 },
    Random { seed: u64, support: i64, max_modulus: f64, half_window: i64 },
    Inline { n_min: i64, q: Vec<[f64; 2]> },
    /// Field JSON file, relative to the experiment file.
    File { path: PathBuf },
}

impl FieldSpec {
    pub fn build(&self, base_dir: &Path) -> Result<LatticeField> {
        match self {
            FieldSpec::Gaussian { amplitude, width, half_window } => {
                LatticeField::gaussian(*amplitude, *width, *half_window)
            }
            FieldSpec::SingleSite { site, value, half_window } => {
                LatticeField::single_site(*site, Complex64::new(value[0], value[1]), *half_window)
            }
            FieldSpec::Random { seed, support, max_modulus, half_window } => {
                LatticeField::random(*seed, *support, *max_modulus, *half_window)
            }
            FieldSpec::Inline { n_min, q } => {
                LatticeField::new(*n_min, q.iter().map(|p| Complex64::new(p[0], p[1])).collect(), 0.0)
            }
            FieldSpec::File { path } => LatticeField::load(base_dir.join(path)).map(|f| f.with_time(0.0)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Simulate,
    Scatter,
    Rh,
    Zm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Zm,
    Fast,
    RejectedEdge,
}

/// Every ray maps to exactly one region.
pub fn route(xi: f64) -> Region {
    let m = xi.abs();
    if (m - 1.0).abs() <= EDGE_TOL || !m.is_finite() {
        Region::RejectedEdge
    } else if m < 1.0 {
        Region::Zm
    } else {
        Region::Fast
    }
}

/// Nearest lattice site on the ray at time `t`, with the realized `xi`.
pub fn snap(xi: f64, t: f64) -> (i64, f64) {
    let n = (2.0 * t * xi).round() as i64;
    (n, n as f64 / (2.0 * t))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub truncation_tol: f64,
    pub log_mass_drift: f64,
    /// Nodewise `|r(simulated) - r(evolved)|` at the last time.
    pub scatter_roundtrip: f64,
    pub rh_vs_sim: f64,
    /// Band for `|q_sim| / |q_zm|` at the largest time of each ZM ray.
    pub zm_ratio: [f64; 2],
    /// Band for the fitted exponent on ZM rays.
    pub zm_exponent: [f64; 2],
    /// Upper bound for the fitted exponent on fast rays.
    pub fast_exponent_max: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            truncation_tol: DEFAULT_TRUNCATION_TOL,
            log_mass_drift: 1e-8,
            scatter_roundtrip: 1e-4,
            rh_vs_sim: 1e-5,
            zm_ratio: [0.75, 1.25],
            zm_exponent: [-0.55, -0.45],
            fast_exponent_max: -0.9,
        }
    }
}

fn default_grid_size() -> usize {
    1024
}

fn default_dt() -> f64 {
    0.01
}

fn default_true() -> bool {
    true
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub field: FieldSpec,
    #[serde(default = "default_grid_size", rename = "N")]
    pub grid_size: usize,
    #[serde(default)]
    pub rays: Vec<f64>,
    #[serde(default)]
    pub times: Vec<f64>,
    pub pipelines: BTreeSet<Pipeline>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Zero-pad the simulation window to `|n| <= 2 t_max + margin` so that nothing
    /// reaches the window edges.
    #[serde(default = "default_true")]
    pub pad_to_light_cone: bool,
    #[serde(default = "default_margin")]
    pub light_cone_margin: i64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub execution: Execution,
    /// Directory that relative paths are resolved against; set by [`Experiment::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_margin() -> i64 {
    200
}

impl Experiment {
    pub fn from_json(text: &str) -> Result<Self> {
        let exp: Experiment = serde_json::from_str(text)?;
        exp.validate()?;
        Ok(exp)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut exp = Self::from_json(&std::fs::read_to_string(path)?)?;
        exp.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(exp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pipelines.is_empty() {
            return Err(Error::Config("no pipelines requested".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if let Some(t) = self.times.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::Config(format!("times must be positive and finite, got {t}")));
        }
        if let Some(x) = self.rays.iter().find(|x| !x.is_finite()) {
            return Err(Error::Config(format!("ray {x} is not finite")));
        }
        if self.light_cone_margin < 0 {
            return Err(Error::Config("light_cone_margin must be non-negative".into()));
        }
        crate::scattering::check_grid_size(self.grid_size).map_err(|e| Error::Config(e.to_string()))
    }

    fn wants(&self, p: Pipeline) -> bool {
        self.pipelines.contains(&p)
    }

    fn sorted_times(&self) -> Vec<f64> {
        let mut ts = self.times.clone();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts
    }
}

/// A complex value at a lattice point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub n: i64,
    pub t: f64,
    pub q: Complex64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitResult {
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

/// Least-squares line through `(ln t, ln |q|)`. Non-positive or non-finite
/// amplitudes are dropped with a warning.
pub fn fit_decay(samples: &[(f64, f64)]) -> Result<FitResult> {
    let usable: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|&(t, q)| t > 0.0 && t.is_finite() && q > 0.0 && q.is_finite())
        .collect();
    if usable.len() < samples.len() {
        log::warn!("fit_decay: dropped {} samples with zero or invalid amplitude", samples.len() - usable.len());
    }
    if usable.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientSamples { usable: usable.len(), required: MIN_FIT_SAMPLES });
    }
    let m = usable.len() as f64;
    let xs: Vec<f64> = usable.iter().map(|s| s.0.ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|s| s.1.ln()).collect();
    let xm = xs.iter().sum::<f64>() / m;
    let ym = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("all samples share one time; slope undefined".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - ym).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let lo = usable.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let hi = usable.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(FitResult { exponent: slope, intercept, r_squared, window: (lo, hi), samples: usable.len() })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualRow {
    pub n: i64,
    pub t: f64,
    pub abs: f64,
    /// `abs / |b|`; zero when both values vanish, infinite when only `b` does.
    pub rel: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualTable {
    pub rows: Vec<ResidualRow>,
    pub max_abs: f64,
    pub median_abs: f64,
    pub max_rel: f64,
}

fn key(n: i64, t: f64) -> (i64, u64) {
    (n, t.to_bits())
}

/// Residuals of `a` against `b`, row per `(n, t)` in the order of `a`.
pub fn compare_pipelines(a: &[Sample], b: &[Sample]) -> Result<ResidualTable> {
    let bmap: BTreeMap<(i64, u64), Complex64> = b.iter().map(|s| (key(s.n, s.t), s.q)).collect();
    let amap: BTreeSet<(i64, u64)> = a.iter().map(|s| key(s.n, s.t)).collect();
    let mut missing: Vec<String> = a
        .iter()
        .filter(|s| !bmap.contains_key(&key(s.n, s.t)))
        .map(|s| format!("(n={}, t={}) only in first", s.n, s.t))
        .collect();
    missing.extend(
        b.iter()
            .filter(|s| !amap.contains(&key(s.n, s.t)))
            .map(|s| format!("(n={}, t={}) only in second", s.n, s.t)),
    );
    if !missing.is_empty() {
        return Err(Error::KeyMismatch { missing });
    }
    let rows: Vec<ResidualRow> = a
        .iter()
        .map(|s| {
            let other = bmap[&key(s.n, s.t)];
            let abs = (s.q - other).norm();
            let rel = if abs == 0.0 { 0.0 } else { abs / other.norm() };
            ResidualRow { n: s.n, t: s.t, abs, rel }
        })
        .collect();
    let mut sorted: Vec<f64> = rows.iter().map(|r| r.abs).collect();
    sorted.sort_by(f64::total_cmp);
    let median_abs = match sorted.len() {
        0 => 0.0,
        m if m % 2 == 1 => sorted[m / 2],
        m => 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]),
    };
    Ok(ResidualTable {
        max_abs: sorted.last().copied().unwrap_or(0.0),
        median_abs,
        max_rel: rows.iter().map(|r| r.rel).fold(0.0, f64::max),
        rows,
    })
}

/// Reads `n, t, re, im` columns (others ignored) from a CSV with a header row.
pub fn read_samples_csv(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    #[derive(Deserialize)]
    struct Row {
        n: i64,
        t: f64,
        re: f64,
        im: f64,
    }
    let mut reader = csv::Reader::from_path(path)?;
    reader
        .deserialize()
        .map(|row| {
            let row: Row = row?;
            Ok(Sample { n: row.n, t: row.t, q: Complex64::new(row.re, row.im) })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct BudgetCheck {
    pub name: String,
    pub value: f64,
    pub limit: String,
    pub passed: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct RaySample {
    pub t: f64,
    pub n: i64,
    pub xi_realized: f64,
    pub sim: Option<Complex64>,
    pub zm: Option<Complex64>,
    pub zm_uncorrected: Option<Complex64>,
    pub fast_scale: Option<f64>,
    pub rh: Option<Complex64>,
    pub rh_residual: Option<f64>,
    /// `|q_sim| / |q_zm|`.
    pub ratio_sim_zm: Option<f64>,
    pub errors: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RayReport {
    pub xi: f64,
    pub region: Region,
    pub samples: Vec<RaySample>,
    pub fit: Option<FitResult>,
    pub fit_error: Option<String>,
    /// Set for `xi < 0` ZM rays, whose arc convention is ambiguous.
    pub convention_dependent: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulationSummary {
    pub n_min: i64,
    pub n_max: i64,
    pub log_mass_drift: f64,
    pub max_edge_modulus: f64,
    pub truncation_warning: bool,
    pub steps: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub grid_size: usize,
    pub c_minus_inf: f64,
    pub sup_r: Option<f64>,
    pub simulation: Option<SimulationSummary>,
    /// `(t, max nodewise |r(simulated) - r(evolved)|)`.
    pub scatter_roundtrip: Option<(f64, f64)>,
    pub rays: Vec<RayReport>,
    pub sim_vs_rh: Option<ResidualTable>,
    pub sim_vs_zm: Option<ResidualTable>,
    pub budgets: Vec<BudgetCheck>,
    pub passed: bool,
    pub outputs: Vec<String>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs the requested pipelines and writes CSVs and `summary.json` under
/// `output_dir`. Failures of a single `(ray, t)` are recorded in the report; only
/// configuration or I/O problems abort the run.
pub fn run_experiment(exp: &Experiment) -> Result<Report> {
    exp.validate()?;
    let exec = exp.execution;
    let field = exp.field.build(&exp.base_dir)?;
    let times = exp.sorted_times();
    let out_dir = exp.base_dir.join(&exp.output_dir);
    std::fs::create_dir_all(&out_dir)?;
    let mut outputs = Vec::new();
    let tol = &exp.tolerances;

    let mut rays: Vec<RayReport> = exp
        .rays
        .iter()
        .map(|&xi| {
            let region = route(xi);
            let samples = times
                .iter()
                .map(|&t| {
                    let (n, xi_realized) = snap(xi, t);
                    let mut s = RaySample { t, n, xi_realized, ..Default::default() };
                    if region == Region::RejectedEdge {
                        s.errors.push("|xi| = 1 is the excluded transition edge".into());
                    }
                    s
                })
                .collect();
            RayReport {
                xi,
                region,
                samples,
                fit: None,
                fit_error: None,
                convention_dependent: region == Region::Zm && xi < 0.0,
            }
        })
        .collect();

    let need_grid = exp.wants(Pipeline::Scatter) || exp.wants(Pipeline::Zm) || exp.wants(Pipeline::Rh);
    let grid = if need_grid { Some(reflection_grid_with(&field, exp.grid_size, exec)?) } else { None };
    if let (Some(g), true) = (&grid, exp.wants(Pipeline::Scatter)) {
        let mut text = String::from("k,theta,r_re,r_im,a_re,a_im\n");
        for k in 0..g.len() {
            let (r, a) = (g.r()[k], g.a()[k]);
            writeln!(text, "{k},{},{},{},{},{}", g.theta(k), r.re, r.im, a.re, a.im).unwrap();
        }
        write_output(&out_dir, "scatter.csv", &text, &mut outputs)?;
        write_output(&out_dir, "rgrid.json", &g.to_json()?, &mut outputs)?;
    }

    let mut simulation = None;
    let mut scatter_roundtrip = None;
    if exp.wants(Pipeline::Simulate) && !times.is_empty() {
        let t_max = *times.last().unwrap();
        let start = if exp.pad_to_light_cone {
            let reach = (2.0 * t_max).ceil() as i64 + exp.light_cone_margin;
            let lo = field.n_min().min(-reach);
            let hi = field.n_max().max(reach);
            LatticeField::from_fn(lo, hi, |n| field.value(n))?
        } else {
            field.clone()
        };
        let sim = simulate_to_times(&start, exp.dt, &times, tol.truncation_tol)?;
        for ray in &mut rays {
            for s in &mut ray.samples {
                let snap = sim.at_time(s.t).expect("every requested time is recorded");
                if s.n < snap.n_min() || s.n > snap.n_max() {
                    s.errors.push(format!("site {} outside the simulated window", s.n));
                } else {
                    s.sim = Some(snap.value(s.n));
                }
            }
        }
        if let (Some(g), true) = (&grid, exp.wants(Pipeline::Scatter)) {
            let last = sim.final_state();
            let simulated = reflection_grid_with(last, exp.grid_size, exec)?;
            let evolved = evolve_reflection(g, last.time())?;
            let dr = simulated
                .r()
                .iter()
                .zip(evolved.r())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            scatter_roundtrip = Some((last.time(), dr));
        }
        simulation = Some(SimulationSummary {
            n_min: start.n_min(),
            n_max: start.n_max(),
            log_mass_drift: sim.log_mass_drift,
            max_edge_modulus: sim.max_edge_modulus,
            truncation_warning: sim.truncation_warning(),
            steps: sim.steps,
        });
    }

    // flat list of (ray, sample) jobs for the prediction and reconstruction fan-out
    let jobs: Vec<(usize, usize)> = rays
        .iter()
        .enumerate()
        .flat_map(|(i, r)| (0..r.samples.len()).map(move |j| (i, j)))
        .collect();

    if let (Some(g), true) = (&grid, exp.wants(Pipeline::Zm)) {
        let results = par::map_range(jobs.len(), exec, |idx| {
            let (i, j) = jobs[idx];
            let s = &rays[i].samples[j];
            match rays[i].region {
                Region::Zm => zm_predict(g, s.n, s.t).map(|p| (Some((p.q_pred, p.q_pred_uncorrected)), None)),
                Region::Fast => fast_region_scale(s.n, s.t).map(|v| (None, Some(v))),
                Region::RejectedEdge => Ok((None, None)),
            }
        });
        for (&(i, j), res) in jobs.iter().zip(results) {
            let s = &mut rays[i].samples[j];
            match res {
                Ok((zm, fast)) => {
                    if let Some((q, printed)) = zm {
                        s.zm = Some(q);
                        s.zm_uncorrected = Some(printed);
                    }
                    s.fast_scale = fast;
                }
                Err(e) => s.errors.push(format!("zm: {e}")),
            }
        }
    }

    if let (Some(g), true) = (&grid, exp.wants(Pipeline::Rh)) {
        let solver = RhSolver::new(g.clone())?;
        let results = par::map_range(jobs.len(), exec, |idx| {
            let (i, j) = jobs[idx];
            let s = &rays[i].samples[j];
            solver.reconstruct(s.n, s.t)
        });
        for (&(i, j), res) in jobs.iter().zip(results) {
            let s = &mut rays[i].samples[j];
            match res {
                Ok(rec) => {
                    s.rh = Some(rec.q);
                    s.rh_residual = Some(rec.residual);
                }
                Err(e) => s.errors.push(format!("rh: {e}")),
            }
        }
    }

    for ray in &mut rays {
        for s in &mut ray.samples {
            if let (Some(a), Some(b)) = (s.sim, s.zm) {
                if b.norm() > 0.0 {
                    s.ratio_sim_zm = Some(a.norm() / b.norm());
                }
            }
        }
        if ray.region != Region::RejectedEdge && exp.wants(Pipeline::Simulate) {
            let pts: Vec<(f64, f64)> = ray.samples.iter().filter_map(|s| s.sim.map(|q| (s.t, q.norm()))).collect();
            match fit_decay(&pts) {
                Ok(fit) => ray.fit = Some(fit),
                Err(e) => ray.fit_error = Some(e.to_string()),
            }
        }
    }

    let pairs = |pick: fn(&RaySample) -> Option<Complex64>| -> (Vec<Sample>, Vec<Sample>) {
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut seen = BTreeSet::new();
        for s in rays.iter().flat_map(|r| &r.samples) {
            if let (Some(x), Some(y)) = (s.sim, pick(s)) {
                if seen.insert(key(s.n, s.t)) {
                    a.push(Sample { n: s.n, t: s.t, q: x });
                    b.push(Sample { n: s.n, t: s.t, q: y });
                }
            }
        }
        (a, b)
    };
    let table = |(a, b): (Vec<Sample>, Vec<Sample>)| -> Result<Option<ResidualTable>> {
        if a.is_empty() {
            Ok(None)
        } else {
            compare_pipelines(&a, &b).map(Some)
        }
    };
    let sim_vs_rh = table(pairs(|s| s.rh))?;
    let sim_vs_zm = table(pairs(|s| s.zm))?;

    let mut budgets = Vec::new();
    let mut check = |name: String, value: f64, limit: String, passed: bool| {
        budgets.push(BudgetCheck { name, value, limit, passed });
    };
    if let Some(s) = &simulation {
        check("log_mass_drift".into(), s.log_mass_drift, format!("<= {:e}", tol.log_mass_drift), s.log_mass_drift <= tol.log_mass_drift);
    }
    if let Some((t, dr)) = scatter_roundtrip {
        check(format!("scatter_roundtrip(t={t})"), dr, format!("<= {:e}", tol.scatter_roundtrip), dr <= tol.scatter_roundtrip);
    }
    if let Some(tab) = &sim_vs_rh {
        check("sim_vs_rh.max_abs".into(), tab.max_abs, format!("<= {:e}", tol.rh_vs_sim), tab.max_abs <= tol.rh_vs_sim);
    }
    for ray in &rays {
        match ray.region {
            Region::Zm => {
                if let Some(s) = ray.samples.iter().rev().find(|s| s.ratio_sim_zm.is_some()) {
                    let v = s.ratio_sim_zm.unwrap();
                    let [lo, hi] = tol.zm_ratio;
                    check(format!("zm_ratio(xi={}, t={})", ray.xi, s.t), v, format!("in [{lo}, {hi}]"), v >= lo && v <= hi);
                }
                if let Some(fit) = &ray.fit {
                    let [lo, hi] = tol.zm_exponent;
                    let v = fit.exponent;
                    check(format!("decay_exponent(xi={})", ray.xi), v, format!("in [{lo}, {hi}]"), v >= lo && v <= hi);
                }
            }
            Region::Fast => {
                if let Some(fit) = &ray.fit {
                    let v = fit.exponent;
                    let lim = tol.fast_exponent_max;
                    check(format!("decay_exponent(xi={})", ray.xi), v, format!("<= {lim}"), v <= lim);
                }
            }
            Region::RejectedEdge => {}
        }
    }
    let passed = budgets.iter().all(|b| b.passed);

    write_tables(exp, &rays, &out_dir, &mut outputs)?;
    let mut cmp = String::from("pair,n,t,abs,rel\n");
    for (name, tab) in [("sim_vs_rh", &sim_vs_rh), ("sim_vs_zm", &sim_vs_zm)] {
        if let Some(tab) = tab {
            for row in &tab.rows {
                writeln!(cmp, "{name},{},{},{},{}", row.n, row.t, row.abs, row.rel).unwrap();
            }
        }
    }
    write_output(&out_dir, "comparisons.csv", &cmp, &mut outputs)?;

    outputs.push("summary.json".into());
    let report = Report {
        grid_size: exp.grid_size,
        c_minus_inf: field.amplitudes().iter().map(|q| (-q.norm_sqr()).ln_1p()).sum::<f64>().exp(),
        sup_r: grid.as_ref().map(ReflectionGrid::sup_r),
        simulation,
        scatter_roundtrip,
        rays,
        sim_vs_rh,
        sim_vs_zm,
        budgets,
        passed,
        outputs,
    };
    std::fs::write(out_dir.join("summary.json"), report.to_json()?)?;
    Ok(report)
}

fn write_output(dir: &Path, name: &str, text: &str, outputs: &mut Vec<String>) -> Result<()> {
    std::fs::write(dir.join(name), text)?;
    outputs.push(name.to_string());
    Ok(())
}

fn opt_c(z: Option<Complex64>) -> (String, String) {
    z.map(|z| (z.re.to_string(), z.im.to_string())).unwrap_or_default()
}

fn write_tables(exp: &Experiment, rays: &[RayReport], dir: &Path, outputs: &mut Vec<String>) -> Result<()> {
    let all = || rays.iter().flat_map(|r| r.samples.iter().map(move |s| (r, s)));
    if exp.wants(Pipeline::Simulate) {
        let mut text = String::from("ray_xi,t,n,re,im\n");
        for (r, s) in all().filter(|(_, s)| s.sim.is_some()) {
            let (re, im) = opt_c(s.sim);
            writeln!(text, "{},{},{},{re},{im}", r.xi, s.t, s.n).unwrap();
        }
        write_output(dir, "simulate.csv", &text, outputs)?;
    }
    if exp.wants(Pipeline::Zm) {
        let mut text = String::from("ray_xi,region,t,n,xi,re,im,abs,uncorrected_re,uncorrected_im,fast_scale\n");
        for (r, s) in all() {
            let region = match r.region {
                Region::Zm => "zm",
                Region::Fast => "fast",
                Region::RejectedEdge => "rejected_edge",
            };
            let (re, im) = opt_c(s.zm);
            let (pre, pim) = opt_c(s.zm_uncorrected);
            let abs = s.zm.map(|z| z.norm().to_string()).unwrap_or_default();
            let fast = s.fast_scale.map(|v| v.to_string()).unwrap_or_default();
            writeln!(text, "{},{region},{},{},{},{re},{im},{abs},{pre},{pim},{fast}", r.xi, s.t, s.n, s.xi_realized).unwrap();
        }
        write_output(dir, "zm.csv", &text, outputs)?;
    }
    if exp.wants(Pipeline::Rh) {
        let mut text = String::from("n,t,re,im,residual\n");
        for (_, s) in all().filter(|(_, s)| s.rh.is_some()) {
            let (re, im) = opt_c(s.rh);
            writeln!(text, "{},{},{re},{im},{}", s.n, s.t, s.rh_residual.unwrap_or(f64::NAN)).unwrap();
        }
        write_output(dir, "rh.csv", &text, outputs)?;
    }
    Ok(())
}
