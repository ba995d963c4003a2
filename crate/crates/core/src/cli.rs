//! Command execution and output writing for the `pseudomode` binary.
//!
//! Each run writes `report.json` (settings echoed with defaults filled in, results, pass flag),
//! command-specific CSV series, and a `run_meta.json` sidecar. Only the sidecar carries
//! timing information, so data files are byte-identical across repeated runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use num_complex::Complex64 as C64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::bath::{correlation_analytic, sample_correlation};
use crate::config::{
    FitBathJob, Job, Lemma1Job, Lemma2Job, MultitimeJob, MultitimeMethod, PseudomodeSpec, RunConfig, SimulateJob,
    SpectrumJob, TheoremJob, WickJob,
};
use crate::error::{Error, Result};
use crate::fitting::{matrix_pencil_fit, to_pseudomodes};
use crate::gkls::{self, wick_four_point_check};
use crate::multitime::{self, dipole_correlation, multitime_batch, reduced_system_trajectory, Propagator};
use crate::oracle::{self, verify_lemma1, verify_lemma2, verify_theorem};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;

/// Options that come from the command line rather than the config file.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub passed: bool,
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            EXIT_OK
        } else {
            EXIT_VALIDATION
        }
    }
}

/// Collects output files for one run.
struct Sink {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Sink {
    fn new(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text)?;
        self.files.push(path);
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
        self.files.push(path);
        Ok(())
    }
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

/// Library constants that act as implicit defaults.
fn library_defaults() -> Value {
    json!({
        "gkls_truncation_tol": gkls::TRUNCATION_TOL,
        "dense_superoperator_limit": multitime::DENSE_SUPEROPERATOR_LIMIT,
        "preservation_tol": multitime::PRESERVATION_TOL,
        "oracle_dimension_cap": oracle::DEFAULT_DIMENSION_CAP,
        "oracle_excitation_cap": oracle::DEFAULT_EXCITATION_CAP,
        "oracle_mass_tol": oracle::DEFAULT_MASS_TOL,
        "oracle_sector_truncation_tol": oracle::DEFAULT_SECTOR_TRUNCATION_TOL,
        "safety_factor": oracle::SAFETY_FACTOR,
        "correlation_rel_tol": crate::bath::CORRELATION_REL_TOL,
    })
}

/// Runs a parsed configuration and writes its outputs.
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let started = Instant::now();
    let dir = opts
        .output
        .clone()
        .or_else(|| cfg.output.as_ref().map(|p| cfg.base_dir.join(p)))
        .unwrap_or_else(|| PathBuf::from("output"));
    let mut sink = Sink::new(dir.clone())?;
    let base = cfg.base_dir.as_path();
    let (results, passed) = match &cfg.job {
        Job::FitBath(job) => fit_bath(job, base, &mut sink)?,
        Job::Simulate(job) => simulate(job, base, &mut sink)?,
        Job::Multitime(job) => multitime_job(job, base, &mut sink)?,
        Job::VerifyLemma1(job) => lemma1(job, base, &mut sink)?,
        Job::VerifyLemma2(job) => lemma2(job, base, &mut sink)?,
        Job::VerifyTheorem(job) => theorem(job, base, &mut sink)?,
        Job::Spectrum(job) => spectrum(job, base, &mut sink)?,
        Job::WickCheck(job) => wick(job, base, &mut sink)?,
    };
    let report = json!({
        "command": cfg.command.name(),
        "settings": cfg.settings(),
        "defaults": library_defaults(),
        "results": results,
        "passed": passed,
    });
    sink.json("report.json", &report)?;
    let meta = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": cfg.command.name(),
        "threads": opts.threads.unwrap_or_else(rayon::current_num_threads),
        "seed": opts.seed,
        "started_unix": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        "elapsed_seconds": started.elapsed().as_secs_f64(),
        "passed": passed,
    });
    sink.json("run_meta.json", &meta)?;
    Ok(RunOutcome { passed, output_dir: dir, files: sink.files })
}

fn fit_bath(job: &FitBathJob, base: &Path, sink: &mut Sink) -> Result<(Value, bool)> {
    let sd = job.spectral_density.resolve(base)?;
    let grid = job.grid.grid()?;
    let series = sample_correlation(&sd, &grid)?;
    let (fit, report) = matrix_pencil_fit(&series, job.order)?;
    let params = to_pseudomodes(&fit, job.channel, job.num_channels, job.n_max)?;
    let spec = PseudomodeSpec::from_params(&params);
    sink.json("pseudomodes.json", &json!({ "pseudomodes": spec }))?;
    sink.csv(
        "correlation.csv",
        &header(&["t", "c_re", "c_im", "fit_re", "fit_im"]),
        grid.iter().zip(&series.values).map(|(&t, c)| {
            let f = fit.evaluate(t);
            vec![t, c.re, c.im, f.re, f.im]
        }),
    )?;
    Ok((json!({ "fit": fit, "fit_report": report, "pseudomodes": spec }), true))
}

fn simulate(job: &SimulateJob, base: &Path, sink: &mut Sink) -> Result<(Value, bool)> {
    let m = job.model.resolve(base)?;
    let d = m.system().dim();
    let grid = job.grid.grid()?;
    let obs = job.observables.iter().map(|o| o.resolve(d)).collect::<Result<Vec<_>>>()?;
    let traj = reduced_system_trajectory(&m, &grid)?;
    let mut cols = vec!["t".to_string()];
    for i in 0..d {
        for j in 0..d {
            cols.push(format!("rho_{i}{j}_re"));
            cols.push(format!("rho_{i}{j}_im"));
        }
    }
    for k in 0..obs.len() {
        cols.push(format!("obs{k}_re"));
        cols.push(format!("obs{k}_im"));
    }
    let rows: Vec<Vec<f64>> = grid
        .iter()
        .zip(&traj)
        .map(|(&t, rho)| {
            let mut row = vec![t];
            for z in rho.entries() {
                row.extend([z.re, z.im]);
            }
            for o in &obs {
                let v = o.matmul(rho).trace();
                row.extend([v.re, v.im]);
            }
            row
        })
        .collect();
    sink.csv("trajectory.csv", &cols, rows)?;
    let trace_defect = traj.iter().map(|r| (r.trace() - C64::new(1.0, 0.0)).norm()).fold(0.0, f64::max);
    let final_state: Vec<Vec<[f64; 2]>> = traj
        .last()
        .map(|r| (0..d).map(|i| (0..d).map(|j| [r[(i, j)].re, r[(i, j)].im]).collect()).collect())
        .unwrap_or_default();
    Ok((json!({ "total_dim": m.total_dim(), "max_trace_defect": trace_defect, "final_state": final_state }), true))
}

fn multitime_job(job: &MultitimeJob, base: &Path, sink: &mut Sink) -> Result<(Value, bool)> {
    let m = job.model.resolve(base)?;
    let reqs = job.requests.iter().map(|r| r.resolve(m.system().dim())).collect::<Result<Vec<_>>>()?;
    let values: Vec<C64> = match job.method {
        MultitimeMethod::Nested => multitime_batch(&m, &reqs).into_iter().collect::<Result<_>>()?,
        MultitimeMethod::Chain => {
            let prop = Propagator::new(&m);
            reqs.iter().map(|r| prop.multitime_chain(r)).collect::<Result<_>>()?
        }
    };
    sink.csv(
        "multitime.csv",
        &header(&["index", "re", "im"]),
        values.iter().enumerate().map(|(k, v)| vec![k as f64, v.re, v.im]),
    )?;
    Ok((json!({ "values": values }), true))
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn lemma1(job: &Lemma1Job, base: &Path, sink: &mut Sink) -> Result<(Value, bool)> {
    let m = job.model.resolve(base)?;
    let grid = job.grid.grid()?;
    let mut reports = Vec::new();
    for p in job.ladder.levels()? {
        log::info!("lemma 1: W = {}, M = {}", p.halfwidth, p.modes_per_channel);
        reports.push(verify_lemma1(&m, &p, &grid)?);
    }
    let maxima: Vec<f64> = reports.iter().map(|r| r.max_distance).collect();
    let monotone = strictly_decreasing(&maxima);
    let finest = *maxima.last().unwrap_or(&f64::INFINITY);
    let passed = finest <= job.tolerance && (monotone || !job.require_monotone);
    let mut rows = Vec::new();
    for (level, r) in reports.iter().enumerate() {
        for (t, d) in r.times.iter().zip(&r.distances) {
            rows.push(vec![level as f64, r.params.halfwidth, r.params.modes_per_channel as f64, *t, *d]);
        }
    }
    sink.csv("lemma1.csv", &header(&["level", "halfwidth", "modes", "t", "trace_distance"]), rows)?;
    let levels: Vec<Value> = reports
        .iter()
        .map(|r| {
            json!({
                "params": r.params, "dimension": r.dimension, "recurrence_time": r.recurrence_time,
                "max_distance": r.max_distance, "top_population": r.top_population,
            })
        })
        .collect();
    Ok((json!({ "levels": levels, "monotone": monotone, "finest_max_distance": finest }), passed))
}

fn lemma2(job: &Lemma2Job, base: &Path, sink: &mut Sink) -> Result<(Value, bool)> {
    let m = job.model.resolve(base)?;
    let grid = job.grid.grid()?;
    let mut reports = Vec::new();
    for p in job.ladder.levels()? {
        log::info!("lemma 2: W = {}, M = {}", p.halfwidth, p.modes_per_channel);
        reports.push(verify_lemma2(&m, &p, job.channels, job.s, &grid)?);
    }
    let sups: Vec<f64> = reports.iter().map(|r| r.sup_norm).collect();
    let monotone = strictly_decreasing(&sups);
    let finest = *sups.last().unwrap_or(&f64::INFINITY);
    let passed = finest <= job.tolerance && (monotone || !job.require_monotone);
    let mut rows = Vec::new();
    for (level, r) in reports.iter().enumerate() {
        for ((t, x), l) in r.times.iter().zip(&r.dilated).zip(&r.pseudomode) {
            rows.push(vec![level as f64, r.params.halfwidth, r.params.modes_per_channel as f64, *t, x.re, x.im, l.re, l.im]);
        }
    }
    sink.csv(
        "lemma2.csv",
        &header(&["level", "halfwidth", "modes", "t", "cx_re", "cx_im", "cl_re", "cl_im"]),
        rows,
    )?;
    let levels: Vec<Value> = reports
        .iter()
        .map(|r| json!({ "params": r.params, "dimension": r.dimension, "recurrence_time": r.recurrence_time, "sup_norm": r.sup_norm }))
        .collect();
    Ok((json!({ "levels": levels, "monotone": monotone, "finest_sup_norm": finest }), passed))
}

fn theorem(job: &TheoremJob, base: &Path, sink: &mut Sink) -> Result<(Value, bool)> {
    let setup = job.resolve(base)?;
    let report = verify_theorem(&setup)?;
    let residual_ok = report.hypothesis_residual <= job.residual_threshold;
    let passed = residual_ok && report.consistent;
    let grid = crate::bath::uniform_grid(setup.fit_t_max, setup.fit_points)?;
    let rows = grid
        .iter()
        .map(|&t| {
            let c = correlation_analytic(&setup.density, t)?;
            let f = report.fit.evaluate(t);
            Ok(vec![t, c.re, c.im, f.re, f.im])
        })
        .collect::<Result<Vec<_>>>()?;
    sink.csv("correlation.csv", &header(&["t", "c_re", "c_im", "fit_re", "fit_im"]), rows)?;
    Ok((json!({ "report": report, "hypothesis_residual_ok": residual_ok }), passed))
}

fn spectrum(job: &SpectrumJob, base: &Path, sink: &mut Sink) -> Result<(Value, bool)> {
    let m = job.model.resolve(base)?;
    let d = job.dipole.resolve(m.system().dim())?;
    let tau = job.tau.grid()?;
    let f = &job.frequencies;
    if f.points < 2 || !(f.max > f.min) {
        return Err(Error::Config("frequencies: need max > min and at least two points".into()));
    }
    let freqs: Vec<f64> =
        (0..f.points).map(|k| f.min + (f.max - f.min) * k as f64 / (f.points - 1) as f64).collect();
    let g = dipole_correlation(&m, &d, job.t_ss, &tau)?;
    let s = multitime::emission_spectrum(&m, &d, job.t_ss, &tau, &freqs)?;
    sink.csv(
        "correlation.csv",
        &header(&["tau", "g_re", "g_im"]),
        tau.iter().zip(&g).map(|(&t, z)| vec![t, z.re, z.im]),
    )?;
    sink.csv("spectrum.csv", &header(&["omega", "s"]), freqs.iter().zip(&s).map(|(&w, &v)| vec![w, v]))?;
    let (k, peak) = s.iter().enumerate().fold((0, f64::NEG_INFINITY), |a, (k, &v)| if v > a.1 { (k, v) } else { a });
    Ok((json!({ "peak_frequency": freqs[k], "peak_value": peak }), true))
}

fn wick(job: &WickJob, base: &Path, sink: &mut Sink) -> Result<(Value, bool)> {
    let m = job.model.resolve(base)?;
    let checks = job
        .times
        .iter()
        .map(|&t| wick_four_point_check(&m, job.channel, t))
        .collect::<Result<Vec<_>>>()?;
    let diffs: Vec<f64> = checks.iter().map(|(l, r)| (l - r).norm()).collect();
    let worst = diffs.iter().copied().fold(0.0, f64::max);
    sink.csv(
        "wick.csv",
        &header(&["t1", "t2", "t3", "t4", "lhs_re", "lhs_im", "rhs_re", "rhs_im", "abs_diff"]),
        job.times.iter().zip(&checks).zip(&diffs).map(|((t, (l, r)), d)| {
            vec![t[0], t[1], t[2], t[3], l.re, l.im, r.re, r.im, *d]
        }),
    )?;
    Ok((json!({ "max_abs_diff": worst }), worst <= job.tolerance))
}
