use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use alrh::asymptotics::zm_predict;
use alrh::harness::{compare_pipelines, fit_decay, read_samples_csv, run_experiment, Experiment};
use alrh::lattice::{simulate, LatticeField, SimConfig, DEFAULT_TRUNCATION_TOL};
use alrh::rh::RhSolver;
use alrh::scattering::{evolve_reflection, reflection_grid_with, ReflectionGrid};
use alrh::Execution;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "alrh", version, about = "Scattering, Riemann-Hilbert reconstruction and long-time asymptotics for the defocusing Ablowitz-Ladik lattice")]
struct Cli {
    /// Run data-parallel loops on a single thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the lattice and write snapshots as `t, n, re, im` rows.
    Simulate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        t_end: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long, default_value_t = 100)]
        record_every: usize,
        /// Zero-pad the window to `|n| <= pad` before integrating.
        #[arg(long)]
        pad: Option<i64>,
        #[arg(long, default_value_t = DEFAULT_TRUNCATION_TOL)]
        truncation_tol: f64,
        /// Fail if the relative drift of the conserved log-mass exceeds this.
        #[arg(long)]
        max_drift: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the final state as field JSON.
        #[arg(long)]
        final_state: Option<PathBuf>,
    },
    /// Compute the reflection coefficient on an `N`-point grid of the unit circle.
    Scatter {
        #[arg(long)]
        input: PathBuf,
        #[arg(long = "N", default_value_t = 1024)]
        grid_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Advance a reflection grid by elapsed time `t`.
    EvolveR {
        #[arg(long)]
        rgrid: PathBuf,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the leading-order asymptotic prediction at `(n, t)`.
    ZmPredict {
        #[arg(long)]
        rgrid: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        n: i64,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover `q_n(t)` from the reflection coefficient for a range of sites.
    RhReconstruct {
        #[arg(long)]
        rgrid: PathBuf,
        /// Single site or inclusive range `a..b`.
        #[arg(long, allow_hyphen_values = true, value_parser = parse_site_range)]
        n: (i64, i64),
        #[arg(long)]
        t: f64,
        /// Expected grid size; must match the grid file.
        #[arg(long = "N")]
        grid_size: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Nodewise residuals between two `n, t, re, im` tables.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fail if the largest absolute residual exceeds this.
        #[arg(long)]
        budget: Option<f64>,
    },
    /// Fit `|q| ~ C t^p` to the samples of one site of an `n, t, re, im` table.
    FitDecay {
        #[arg(long)]
        input: PathBuf,
        /// Site to fit; defaults to all rows.
        #[arg(long, allow_hyphen_values = true)]
        n: Option<i64>,
        #[arg(long, default_value_t = 0.0)]
        t_min: f64,
        #[arg(long, default_value_t = f64::INFINITY)]
        t_max: f64,
        /// Accepted exponent band `lo,hi`.
        #[arg(long, allow_hyphen_values = true, value_parser = parse_band)]
        expect: Option<(f64, f64)>,
    },
    /// Run an experiment file and write all tables plus `summary.json`.
    Run {
        config: PathBuf,
    },
}

fn parse_site_range(s: &str) -> Result<(i64, i64), String> {
    let parse = |x: &str| x.trim().parse::<i64>().map_err(|e| format!("bad site '{x}': {e}"));
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (parse(a)?, parse(b.strip_prefix('=').unwrap_or(b))?),
        None => {
            let n = parse(s)?;
            (n, n)
        }
    };
    if hi < lo {
        return Err(format!("empty range {s}"));
    }
    Ok((lo, hi))
}

fn parse_band(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or_else(|| format!("expected 'lo,hi', got '{s}'"))?;
    let parse = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("bad bound '{x}': {e}"));
    Ok((parse(lo)?, parse(hi)?))
}

fn create(path: &Path) -> alrh::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> alrh::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn pad(field: &LatticeField, half_window: i64) -> alrh::Result<LatticeField> {
    let lo = field.n_min().min(-half_window);
    let hi = field.n_max().max(half_window);
    Ok(LatticeField::from_fn(lo, hi, |n| field.value(n))?.with_time(field.time()))
}

/// `Ok(true)` when every requested budget was met.
fn run(cli: Cli) -> alrh::Result<bool> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match cli.command {
        Command::Simulate { input, t_end, dt, record_every, pad: half, truncation_tol, max_drift, out, final_state } => {
            let mut field = LatticeField::load(&input)?;
            if let Some(h) = half {
                field = pad(&field, h)?;
            }
            let sim = simulate(&field, &SimConfig { dt, t_end, record_every, truncation_tol })?;
            sim.write_csv(create(&out)?)?;
            if let Some(path) = final_state {
                sim.final_state().save(path)?;
            }
            if sim.truncation_warning() {
                log::warn!("edge modulus {:.3e} exceeded {truncation_tol:e}", sim.max_edge_modulus);
            }
            println!(
                "{}",
                serde_json::json!({
                    "steps": sim.steps,
                    "log_mass_drift": sim.log_mass_drift,
                    "max_edge_modulus": sim.max_edge_modulus,
                    "truncation_warning": sim.truncation_warning(),
                })
            );
            Ok(max_drift.is_none_or(|m| sim.log_mass_drift <= m) && !sim.truncation_warning())
        }
        Command::Scatter { input, grid_size, out } => {
            let grid = reflection_grid_with(&LatticeField::load(&input)?, grid_size, exec)?;
            grid.save(&out)?;
            println!(
                "{}",
                serde_json::json!({ "N": grid.len(), "sup_r": grid.sup_r(), "c_minus_inf": grid.c_minus_inf() })
            );
            Ok(true)
        }
        Command::EvolveR { rgrid, t, out } => {
            evolve_reflection(&ReflectionGrid::load(&rgrid)?, t)?.save(&out)?;
            Ok(true)
        }
        Command::ZmPredict { rgrid, n, t, out } => {
            let pred = zm_predict(&ReflectionGrid::load(&rgrid)?, n, t)?;
            write_json(&out, &pred)?;
            println!("{}", serde_json::json!({ "n": n, "t": t, "q_pred": [pred.q_pred.re, pred.q_pred.im] }));
            Ok(true)
        }
        Command::RhReconstruct { rgrid, n: (lo, hi), t, grid_size, out } => {
            let grid = ReflectionGrid::load(&rgrid)?;
            if let Some(expected) = grid_size.filter(|&m| m != grid.len()) {
                return Err(alrh::Error::Config(format!(
                    "--N {expected} does not match the grid file, which has N = {}",
                    grid.len()
                )));
            }
            let ns: Vec<i64> = (lo..=hi).collect();
            let recon = RhSolver::new(grid)?.reconstruct_many(&ns, t, exec)?;
            let mut w = create(&out)?;
            writeln!(w, "n,t,re,im,residual")?;
            for r in &recon {
                writeln!(w, "{},{},{},{},{}", r.n, r.t, r.q.re, r.q.im, r.residual)?;
            }
            w.flush()?;
            Ok(true)
        }
        Command::Compare { a, b, out, budget } => {
            let table = compare_pipelines(&read_samples_csv(&a)?, &read_samples_csv(&b)?)?;
            if let Some(path) = out {
                let mut w = create(&path)?;
                writeln!(w, "n,t,abs,rel")?;
                for row in &table.rows {
                    writeln!(w, "{},{},{},{}", row.n, row.t, row.abs, row.rel)?;
                }
                w.flush()?;
            }
            println!(
                "{}",
                serde_json::json!({
                    "rows": table.rows.len(),
                    "max_abs": table.max_abs,
                    "median_abs": table.median_abs,
                    "max_rel": table.max_rel,
                })
            );
            Ok(budget.is_none_or(|b| table.max_abs <= b))
        }
        Command::FitDecay { input, n, t_min, t_max, expect } => {
            let points: Vec<(f64, f64)> = read_samples_csv(&input)?
                .into_iter()
                .filter(|s| n.is_none_or(|m| s.n == m) && s.t >= t_min && s.t <= t_max)
                .map(|s| (s.t, s.q.norm()))
                .collect();
            let fit = fit_decay(&points)?;
            println!("{}", serde_json::to_string(&fit)?);
            Ok(expect.is_none_or(|(lo, hi)| lo <= fit.exponent && fit.exponent <= hi))
        }
        Command::Run { config } => {
            let mut exp = Experiment::load(&config)?;
            if cli.sequential {
                exp.execution = Execution::Sequential;
            }
            let report = run_experiment(&exp)?;
            for b in report.budgets.iter().filter(|b| !b.passed) {
                log::warn!("budget {} not met: {:e} vs {}", b.name, b.value, b.limit);
            }
            println!("{}", serde_json::json!({ "passed": report.passed, "outputs": report.outputs }));
            Ok(report.passed)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
