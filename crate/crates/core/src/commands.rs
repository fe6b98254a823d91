//! The four commands behind the `hlblowup` binary: simulate, verify,
//! bounds and sweep. Each returns an outcome carrying its exit code.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{
    closed_form_bound, comparison_h, comparison_invariant, entropy_envelope, fg_envelope, gengron_envelope,
    gengron_envelope_with, BoundsProblem, Envelope, Tolerance,
};
use crate::config::{set_dotted_key, InitialState, RunConfig};
use crate::diagnostics::{blowup_time_estimate, DiagnosticsRecord, PeriodicQuadform, QuadformLine, QuadformMethod};
use crate::error::Error;
use crate::evolve::{model_velocity, Checkpoint, Dynamics, LogRunner, PeriodicRunner, Runner, Termination};
use crate::fields::{smooth_bump, trapezoid, Domain, FieldState, LogState};
use crate::grid::{LogGrid, PeriodicGrid};
use crate::kernels::{verify_kernel_properties, SamplingPlan};

/// Exit status of a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    VerificationFailed = 1,
    Usage = 2,
    Numeric = 3,
}

/// A failed command: message plus exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandError {
    pub code: ExitCode,
    pub message: String,
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CommandError {}

impl CommandError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self { code: ExitCode::Usage, message: msg.into() }
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Self { code: ExitCode::Numeric, message: msg.into() }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self::numeric(format!("{}: {e}", path.display()))
    }
}

/// Configuration problems map to exit 2, everything else to exit 3.
fn classify(e: Error) -> CommandError {
    match e {
        Error::Parameter(_)
        | Error::Spec(_)
        | Error::UnknownPreset(_)
        | Error::InvalidData(_)
        | Error::InvalidGrid(_)
        | Error::Inapplicable(_) => CommandError::usage(e.to_string()),
        _ => CommandError::numeric(e.to_string()),
    }
}

/// Columns of `timeseries.csv` for periodic runs.
pub const PERIODIC_COLUMNS: [&str; 17] = [
    "t",
    "dt",
    "I",
    "J",
    "dIdt_minus_J",
    "dJdt_minus_c0I2",
    "max_omega",
    "max_thetax",
    "max_ux",
    "bkm_ux",
    "bkm_thetax",
    "bkm_omega",
    "l1_omega",
    "l1_bound_margin",
    "u_l2",
    "u_bmo_proxy",
    "tail_fraction",
];

/// Columns of `timeseries.csv` for log-line runs.
pub const LOG_COLUMNS: [&str; 19] = [
    "t",
    "dt",
    "entropy",
    "F",
    "F_from_theta",
    "G",
    "dFdt_minus_G",
    "dGdt_minus_F2",
    "entropy_ddot_margin",
    "lemma3_margin",
    "lemma3_shift",
    "mass",
    "max_omega",
    "max_thetax",
    "max_ux",
    "bkm_ux",
    "bkm_thetax",
    "bkm_omega",
    "tail_fraction",
];

/// Decimal text with 16 significant digits.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.15e}")
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<(), CommandError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CommandError::numeric(format!("{}: {e}", path.display())))?;
    let err = |e: csv::Error| CommandError::numeric(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt_num(*v))).map_err(err)?;
    }
    w.flush().map_err(|e| CommandError::io(path, e))
}

/// Write the diagnostics table with the given column set.
pub fn write_timeseries(path: &Path, records: &[DiagnosticsRecord], columns: &[&str]) -> Result<(), CommandError> {
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| DiagnosticsRecord::NAMES.iter().position(|n| n == c).expect("known column"))
        .collect();
    write_csv(
        path,
        columns,
        records.iter().map(|r| {
            let a = r.to_array();
            idx.iter().map(|&i| a[i]).collect()
        }),
    )
}

/// Output files of a state space.
pub trait RunOutput: Dynamics {
    const COLUMNS: &'static [&'static str];
    fn snapshot(&self, state: &Self::State, path: &Path) -> Result<(), CommandError>;
}

impl RunOutput for crate::evolve::PeriodicDynamics {
    const COLUMNS: &'static [&'static str] = &PERIODIC_COLUMNS;
    fn snapshot(&self, s: &FieldState, path: &Path) -> Result<(), CommandError> {
        let vel = model_velocity(&self.spec(), &s.omega, &s.grid).map_err(classify)?;
        let x = s.grid.nodes();
        write_csv(
            path,
            &["x", "omega", "theta", "u"],
            (0..s.grid.n()).map(|j| vec![x[j], s.omega[j], s.theta[j], vel.u[j]]),
        )
    }
}

impl RunOutput for crate::evolve::LogDynamics {
    const COLUMNS: &'static [&'static str] = &LOG_COLUMNS;
    fn snapshot(&self, s: &LogState, path: &Path) -> Result<(), CommandError> {
        let u = self.velocity().velocity(&s.omega).map_err(classify)?;
        let xi = s.grid.nodes();
        write_csv(
            path,
            &["xi", "omega", "theta", "rho", "u"],
            (0..s.grid.m()).map(|j| vec![xi[j], s.omega[j], s.theta[j], s.rho[j], u[j]]),
        )
    }
}

/// What a finished simulation reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateSummary {
    pub output_dir: PathBuf,
    pub termination: Termination,
    pub records: usize,
    pub steps: u64,
    pub t_final: f64,
    pub max_omega_final: f64,
    pub blowup_time_estimate: Option<f64>,
    pub blowup_fit_quality: Option<f64>,
    pub blowup_estimate_note: Option<String>,
}

impl SimulateSummary {
    pub fn exit_code(&self) -> ExitCode {
        match self.termination {
            Termination::NanDetected => ExitCode::Numeric,
            _ => ExitCode::Success,
        }
    }
}

#[derive(Serialize)]
struct Meta<'a> {
    program: &'a str,
    version: &'a str,
    config: &'a RunConfig,
    summary: &'a SimulateSummary,
    timeseries_columns: &'a [&'a str],
    snapshot_files: Vec<String>,
}

const CHECKPOINT: &str = "checkpoint.json";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CommandError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CommandError::numeric(e.to_string()))?;
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text).map_err(|e| CommandError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CommandError::io(path, e))
}

fn drive<D: RunOutput>(
    mut runner: Runner<D>,
    cfg: &RunConfig,
    out: &Path,
) -> Result<SimulateSummary, CommandError> {
    let snap_dir = out.join("snapshots");
    fs::create_dir_all(&snap_dir).map_err(|e| CommandError::io(&snap_dir, e))?;
    let snap_every = cfg.run.snapshot_every;
    let ck_every = cfg.run.checkpoint_every;
    let write_snapshot = |runner: &Runner<D>, i: usize| -> Result<(), CommandError> {
        runner.dynamics().snapshot(runner.state(), &snap_dir.join(format!("{i:04}.csv")))
    };
    if runner.records().len() == 1 && snap_every > 0 {
        write_snapshot(&runner, 0)?;
    }
    loop {
        match runner.advance().map_err(classify)? {
            crate::evolve::Event::Recorded(i) => {
                let last = runner.termination().is_some();
                if snap_every > 0 && (i % snap_every == 0 || last) {
                    write_snapshot(&runner, i)?;
                }
                if ck_every > 0 && i % ck_every == 0 {
                    write_json(&out.join(CHECKPOINT), &runner.checkpoint())?;
                }
            }
            crate::evolve::Event::Finished(_) => break,
        }
    }
    write_json(&out.join(CHECKPOINT), &runner.checkpoint())?;
    let records = runner.finalized_records();
    write_timeseries(&out.join("timeseries.csv"), &records, D::COLUMNS)?;
    let resolved: Vec<&DiagnosticsRecord> =
        records.iter().filter(|r| r.tail_fraction <= cfg.control.tail_threshold).collect();
    let t: Vec<f64> = resolved.iter().map(|r| r.t).collect();
    let m: Vec<f64> = resolved.iter().map(|r| r.max_omega).collect();
    let window = (t.len() / 4).max(8);
    let est = blowup_time_estimate(&t, &m, window);
    let last = records.last().expect("at least the initial record");
    let summary = SimulateSummary {
        output_dir: out.to_path_buf(),
        termination: runner.termination().unwrap_or(Termination::TimeReached),
        records: records.len(),
        steps: runner.steps(),
        t_final: last.t,
        max_omega_final: last.max_omega,
        blowup_time_estimate: est.as_ref().ok().map(|e| e.t_star),
        blowup_fit_quality: est.as_ref().ok().map(|e| e.fit_quality),
        blowup_estimate_note: est.err().map(|e| e.to_string()),
    };
    let mut files: Vec<String> = fs::read_dir(&snap_dir)
        .map_err(|e| CommandError::io(&snap_dir, e))?
        .filter_map(|e| e.ok().map(|e| format!("snapshots/{}", e.file_name().to_string_lossy())))
        .collect();
    files.sort();
    let meta = Meta {
        program: "hlblowup",
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        summary: &summary,
        timeseries_columns: D::COLUMNS,
        snapshot_files: files,
    };
    write_json(&out.join("meta.json"), &meta)?;
    Ok(summary)
}

/// Check that a checkpoint belongs to `cfg` and move its end time to
/// `run.t_end`, so a finished run can be extended.
fn adopt<S>(ck: &mut Checkpoint<S>, cfg: &RunConfig, spec: crate::fields::ModelSpec) -> Result<(), CommandError> {
    if ck.spec != spec || ck.control != cfg.control || ck.record_every != cfg.run.record_every {
        return Err(CommandError::usage("checkpoint does not match the configuration (model, control or record_every)"));
    }
    let t_last = ck.records.last().and_then(|r| r[0]).unwrap_or(0.0);
    if cfg.run.t_end < t_last {
        return Err(CommandError::usage(format!("run.t_end = {} precedes the checkpoint time {t_last}", cfg.run.t_end)));
    }
    if ck.termination == Some(Termination::TimeReached) && cfg.run.t_end > ck.t_end {
        ck.termination = None;
    }
    ck.t_end = cfg.run.t_end;
    Ok(())
}

/// Run a configuration, writing `timeseries.csv`, `snapshots/NNNN.csv`,
/// `meta.json` and `checkpoint.json` under `out` (default: `run.output_dir`).
/// With `resume`, continue from `out/checkpoint.json`.
pub fn simulate(cfg: &RunConfig, out: Option<&Path>, resume: bool) -> Result<SimulateSummary, CommandError> {
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.run.output_dir.clone());
    fs::create_dir_all(&out).map_err(|e| CommandError::io(&out, e))?;
    let spec = cfg.model_spec().map_err(classify)?;
    let ck_path = out.join(CHECKPOINT);
    let read_ck = || -> Result<String, CommandError> {
        fs::read_to_string(&ck_path).map_err(|e| CommandError::usage(format!("{}: {e}", ck_path.display())))
    };
    let bad_ck = |e: serde_json::Error| CommandError::usage(format!("{}: {e}", ck_path.display()));
    match spec.domain {
        Domain::Periodic => {
            let runner = if resume {
                let mut ck: Checkpoint<FieldState> = serde_json::from_str(&read_ck()?).map_err(bad_ck)?;
                adopt(&mut ck, cfg, spec)?;
                PeriodicRunner::resume(ck).map_err(classify)?
            } else {
                let InitialState::Periodic(s0) = cfg.initial_state().map_err(classify)? else { unreachable!() };
                PeriodicRunner::new(spec, s0, cfg.control, cfg.run.t_end, cfg.run.record_every, cfg.run.lp_exponent)
                    .map_err(classify)?
            };
            drive(runner, cfg, &out)
        }
        Domain::LogLine => {
            let runner = if resume {
                let mut ck: Checkpoint<LogState> = serde_json::from_str(&read_ck()?).map_err(bad_ck)?;
                adopt(&mut ck, cfg, spec)?;
                LogRunner::resume(ck).map_err(classify)?
            } else {
                let InitialState::Log(s0) = cfg.initial_state().map_err(classify)? else { unreachable!() };
                LogRunner::new(spec, s0, cfg.control, cfg.run.t_end, cfg.run.record_every, cfg.run.lp_exponent)
                    .map_err(classify)?
            };
            drive(runner, cfg, &out)
        }
    }
}

/// One checked property in a verification report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportLine {
    pub suite: String,
    pub property: String,
    pub samples: usize,
    /// Most negative one-sided margin; the property holds when this is
    /// at least `-tolerance`.
    pub worst: f64,
    pub location: String,
    pub tolerance: f64,
    pub pass: bool,
}

impl ReportLine {
    fn new(suite: &str, property: &str, samples: usize, worst: f64, location: String, tolerance: f64) -> Self {
        Self {
            suite: suite.into(),
            property: property.into(),
            samples,
            worst,
            location,
            tolerance,
            pass: worst >= -tolerance,
        }
    }
}

impl fmt::Display for ReportLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}] {} : samples={} worst={:.3e} tol={:.1e} at {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.suite,
            self.property,
            self.samples,
            self.worst,
            self.tolerance,
            self.location
        )
    }
}

/// Options of the verify command.
#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    pub trials: Option<usize>,
    pub seed: u64,
    /// Overrides every per-check tolerance.
    pub tolerance: Option<f64>,
    /// A run whose trajectory is checked against the inequalities.
    pub config: Option<RunConfig>,
}

/// Suite names accepted by [`verify`].
pub const SUITES: [&str; 4] = ["kernels", "quadforms", "inequalities", "all"];

pub fn verify(suite: &str, opts: &VerifyOptions) -> Result<Vec<ReportLine>, CommandError> {
    let mut out = Vec::new();
    let run = |s: &str| suite == s || suite == "all";
    if !SUITES.contains(&suite) {
        return Err(CommandError::usage(format!("unknown suite `{suite}`; expected one of {SUITES:?}")));
    }
    if run("kernels") {
        out.extend(verify_kernels(opts));
    }
    if run("quadforms") {
        out.extend(verify_quadforms(opts));
    }
    if run("inequalities") {
        out.extend(verify_inequalities(opts)?);
    }
    Ok(out)
}

fn verify_kernels(opts: &VerifyOptions) -> Vec<ReportLine> {
    let mut plan = SamplingPlan { seed: opts.seed, ..SamplingPlan::default() };
    if let Some(k) = opts.trials {
        plan.random = k;
    }
    let tol = opts.tolerance.unwrap_or(1e-10);
    plan.tolerance = tol;
    verify_kernel_properties(&plan)
        .into_iter()
        .map(|r| {
            let loc = format!("{:?}", r.worst_location);
            ReportLine::new("kernels", &r.property, r.samples, r.worst_violation, loc, tol)
        })
        .collect()
}

/// Nonnegative odd data on a periodic grid: sums of bumps on `(0, L/2)`
/// extended oddly about 0 and `L/2`.
pub fn random_periodic_vorticity(grid: &PeriodicGrid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let l = grid.length();
    let bumps: Vec<(f64, f64, f64)> = (0..rng.gen_range(1..=3))
        .map(|_| {
            let w = rng.gen_range(0.08..0.2) * l;
            let c = rng.gen_range(w..0.5 * l - w);
            (rng.gen_range(0.1..1.0), c, w)
        })
        .collect();
    grid.sample(|x| {
        bumps
            .iter()
            .map(|&(a, c, w)| {
                let b = |z: f64| smooth_bump((z - c) / w);
                a * (b(x) - b(l - x) + b(x + l) - b(-x))
            })
            .sum()
    })
}

/// Nonnegative compactly supported data on a log grid.
pub fn random_line_vorticity(grid: &LogGrid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let span = grid.xi_max() - grid.xi_min();
    let lo = grid.xi_min() + 0.25 * span;
    let hi = grid.xi_max() - 0.25 * span;
    let bumps: Vec<(f64, f64, f64)> = (0..rng.gen_range(1..=3))
        .map(|_| (rng.gen_range(0.1..1.0), rng.gen_range(lo..hi), rng.gen_range(0.5..0.2 * span)))
        .collect();
    grid.sample(|x| bumps.iter().map(|&(a, c, w)| a * smooth_bump((x - c) / w)).sum())
}

/// Worst normalized values of the periodic and line quadratic forms over
/// `trials` random nonnegative vorticities with random split points.
pub fn quadform_trials(trials: usize, seed: u64) -> ((f64, String), (f64, String)) {
    let grid = PeriodicGrid::new(2.0 * PI, 1024).unwrap();
    let pq = PeriodicQuadform::new(&grid, QuadformMethod::Representation);
    let lgrid = LogGrid::new(-8.0, 8.0, 1601).unwrap();
    let lq = QuadformLine::new(&lgrid);
    let periodic: Vec<(f64, String)> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(k as u64));
            let w = random_periodic_vorticity(&grid, &mut rng);
            let norm2 = trapezoid(&w.iter().map(|v| v * v).collect::<Vec<_>>(), grid.dx()).max(1e-300);
            let pts: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..=PI)).collect();
            let vals = pq.eval_many(&w, &pts).expect("valid split points");
            let (i, v) = vals.iter().enumerate().fold((0, f64::INFINITY), |b, (i, v)| if *v < b.1 { (i, *v) } else { b });
            (v / norm2, format!("trial {k}, a = {:.6}", pts[i]))
        })
        .collect();
    let line: Vec<(f64, String)> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_033).wrapping_add(k as u64) ^ 0x5eed);
            let w = random_line_vorticity(&lgrid, &mut rng);
            let norm2 = trapezoid(&w.iter().map(|v| v * v).collect::<Vec<_>>(), lgrid.h()).max(1e-300);
            let pts: Vec<f64> = (0..5).map(|_| rng.gen_range(-6.0..6.0)).collect();
            let vals = lq.eval_many(&w, &pts).expect("compact data");
            let (i, v) = vals.iter().enumerate().fold((0, f64::INFINITY), |b, (i, v)| if *v < b.1 { (i, *v) } else { b });
            (v / norm2, format!("trial {k}, xi = {:.6}", pts[i]))
        })
        .collect();
    let worst = |v: Vec<(f64, String)>| {
        v.into_iter().fold((f64::INFINITY, String::new()), |b, x| if x.0 < b.0 { x } else { b })
    };
    (worst(periodic), worst(line))
}

fn verify_quadforms(opts: &VerifyOptions) -> Vec<ReportLine> {
    let trials = opts.trials.unwrap_or(1000);
    let tol = opts.tolerance.unwrap_or(1e-6);
    let ((pw, pl), (lw, ll)) = quadform_trials(trials, opts.seed);
    vec![
        ReportLine::new("quadforms", "int_a^{L/2} omega [u cot(mu x)]_x >= 0", trials * 5, pw, pl, tol),
        ReportLine::new("quadforms", "int_{-inf}^xi U_xi Omega >= 0", trials * 5, lw, ll, tol),
    ]
}

fn verify_inequalities(opts: &VerifyOptions) -> Result<Vec<ReportLine>, CommandError> {
    let s = "inequalities";
    let tol_or = |d: f64| opts.tolerance.unwrap_or(d);
    let mut out = Vec::new();

    let want = 1.0 + 3.0 * 1.5f64.powf(-2.0 / 3.0);
    let got = closed_form_bound(1.0, 1.0, 1.0);
    out.push(ReportLine::new(s, "closed-form bound at alpha = c0 = t0 = 1", 1, -(got - want).abs(), format!("{got}"), tol_or(1e-12)));

    let mut worst = f64::INFINITY;
    let mut loc = String::new();
    let mut n = 0;
    for &(alpha, c0) in &[(1.0, 1.0), (0.25, 0.5), (2.0, 2.0 / (4.0 * PI * PI)), (9.0, 0.05)] {
        let sol = comparison_h(alpha, c0, 100.0, Tolerance::default()).map_err(classify)?;
        for (t, y) in sol.t.iter().zip(&sol.y) {
            n += 1;
            let r = -comparison_invariant(alpha, c0, y[0], y[1]).abs();
            if r < worst {
                worst = r;
                loc = format!("alpha = {alpha}, c0 = {c0}, t = {t:.6}");
            }
        }
    }
    out.push(ReportLine::new(s, "(h')^{3/2} = alpha^{3/2} + (3/2) c0 h^2", n, worst, loc, tol_or(1e-8)));

    let trials = opts.trials.unwrap_or(100).min(1000);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst = f64::INFINITY;
    let mut loc = String::new();
    for _ in 0..trials {
        let i0 = rng.gen_range(0.1..3.0);
        let c0 = rng.gen_range(0.02..2.0);
        let env = gengron_envelope_with(i0, 0.0, c0, 1e4, 1e8, Tolerance::default()).map_err(classify)?;
        let (Some(ts), Some(up)) = (env.t_star, env.t_star_upper) else {
            worst = f64::NEG_INFINITY;
            loc = format!("I0 = {i0}, c0 = {c0}: no blow-up");
            continue;
        };
        let m = (up - ts) / up;
        if m < worst {
            worst = m;
            loc = format!("I0 = {i0:.6}, c0 = {c0:.6}");
        }
    }
    out.push(ReportLine::new(s, "equality ODE blow-up time <= T_star_upper", trials, worst, loc, tol_or(0.0)));

    let e = entropy_envelope(1.0, 0.0, 50.0).map_err(classify)?;
    let ts = e.t_star.unwrap_or(50.0);
    let v: Vec<f64> = (0..400).map(|k| e.value(k as f64 * 0.95 * ts / 399.0).unwrap()).collect();
    let (w, k) = (1..v.len() - 1)
        .map(|k| (v[k + 1] - 2.0 * v[k] + v[k - 1], k))
        .fold((f64::INFINITY, 0), |b, x| if x.0 < b.0 { x } else { b });
    out.push(ReportLine::new(s, "entropy envelope convex", v.len() - 2, w, format!("sample {k}"), tol_or(1e-10)));

    let fg = fg_envelope(1.0, 0.0, 100.0).map_err(classify)?;
    let w = fg.solution.y.windows(2).map(|p| p[1][1] - p[0][1]).fold(f64::INFINITY, f64::min);
    out.push(ReportLine::new(s, "G nondecreasing along F' = G, G' = F^2/pi", fg.solution.y.len(), w, String::new(), tol_or(0.0)));

    if let Some(cfg) = &opts.config {
        out.extend(trajectory_checks(cfg, opts)?);
    }
    Ok(out)
}

/// Margins of the differential inequalities along a simulated trajectory,
/// restricted to records with `tail_fraction` below the threshold.
fn trajectory_checks(cfg: &RunConfig, opts: &VerifyOptions) -> Result<Vec<ReportLine>, CommandError> {
    let s = "inequalities";
    let tol_or = |d: f64| opts.tolerance.unwrap_or(d);
    let spec = cfg.model_spec().map_err(classify)?;
    let thr = cfg.control.tail_threshold;
    let worst_of = |recs: &[DiagnosticsRecord], f: &dyn Fn(&DiagnosticsRecord) -> f64| -> (f64, String) {
        recs.iter()
            .filter(|r| r.tail_fraction <= thr)
            .map(|r| (f(r), format!("t = {:.6}", r.t)))
            .filter(|x| !x.0.is_nan())
            .fold((f64::INFINITY, String::new()), |b, x| if x.0 < b.0 { x } else { b })
    };
    let mut out = Vec::new();
    match cfg.initial_state().map_err(classify)? {
        InitialState::Periodic(s0) => {
            let c0 = 2.0 / s0.grid.length().powi(2);
            let mut r = PeriodicRunner::new(spec, s0, cfg.control, cfg.run.t_end, cfg.run.record_every, cfg.run.lp_exponent)
                .map_err(classify)?;
            r.run_to_end(|_, _| {}).map_err(classify)?;
            let recs = r.finalized_records();
            let n = recs.len();
            let (w, l) = worst_of(&recs, &|r| r.d_i_dt_minus_j);
            out.push(ReportLine::new(s, "dI/dt - J >= 0 (simulated)", n, w, l, tol_or(1e-3)));
            let (w, l) = worst_of(&recs, &|r| r.d_j_dt_minus_c0_i2 / r.i.powi(2).max(1.0));
            out.push(ReportLine::new(s, "dJ/dt - c0 I^2 >= 0 (simulated)", n, w, l, tol_or(1e-3)));
            let resolved: Vec<&DiagnosticsRecord> = recs.iter().filter(|r| r.tail_fraction <= thr).collect();
            let inc = resolved.windows(2).map(|p| p[1].i - p[0].i).fold(f64::INFINITY, f64::min);
            out.push(ReportLine::new(s, "I(t) increasing (simulated)", n, inc, String::new(), tol_or(0.0)));
            let (i0, j0) = (recs[0].i, recs[0].j);
            if i0 > 0.0 && j0 >= 0.0 {
                let env = gengron_envelope(i0, j0, c0, cfg.run.t_end).map_err(classify)?;
                let (w, l) = worst_of(&recs, &|r| match env.value(r.t) {
                    Some(v) => (r.i - (v - 1e-2 * r.i)) / r.i.abs().max(1e-300),
                    None => f64::NAN,
                });
                out.push(ReportLine::new(s, "I(t) >= gengron envelope - 1%", n, w, l, tol_or(0.0)));
            }
            let (w, l) = worst_of(&recs, &|r| r.l1_bound_margin / (r.l1_bound_margin + r.l1_omega) + 1e-2);
            out.push(ReportLine::new(s, "||omega||_1 <= ||omega0||_1 + 2||theta0||_inf t + 1%", n, w, l, tol_or(0.0)));
        }
        InitialState::Log(s0) => {
            let mut r = LogRunner::new(spec, s0, cfg.control, cfg.run.t_end, cfg.run.record_every, 2.0).map_err(classify)?;
            r.run_to_end(|_, _| {}).map_err(classify)?;
            let recs = r.finalized_records();
            let n = recs.len();
            let (w, l) = worst_of(&recs, &|r| r.d_f_dt_minus_g);
            out.push(ReportLine::new(s, "dF/dt - G >= 0 (simulated)", n, w, l, tol_or(1e-3)));
            let (w, l) = worst_of(&recs, &|r| r.d_g_dt_minus_f2);
            out.push(ReportLine::new(s, "dG/dt - F^2/pi >= 0 (simulated)", n, w, l, tol_or(1e-3)));
            let (w, l) = worst_of(&recs, &|r| r.entropy_ddot_margin);
            out.push(ReportLine::new(s, "entropy'' - (2/pi) exp(e^{S-1} - S) >= 0 (simulated)", n, w, l, tol_or(1e-3)));
            let (w, l) = worst_of(&recs, &|r| r.lemma3_margin);
            out.push(ReportLine::new(s, "F >= exp(S - 1) (simulated)", n, w, l, tol_or(1e-6)));
        }
    }
    Ok(out)
}

/// Parse `k=v,k=v` into numbers.
pub fn parse_params(text: &str) -> Result<BTreeMap<String, f64>, CommandError> {
    let mut out = BTreeMap::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CommandError::usage(format!("`{item}` is not key=value")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| CommandError::usage(format!("value of `{}` is not a number", k.trim())))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

/// Write an envelope as CSV (t plus one column per component).
pub fn write_envelope<W: std::io::Write>(env: &Envelope, w: W) -> Result<(), CommandError> {
    let mut w = csv::Writer::from_writer(w);
    let err = |e: csv::Error| CommandError::numeric(e.to_string());
    let mut header = vec!["t"];
    header.extend(env.columns.iter().copied());
    w.write_record(&header).map_err(err)?;
    for (t, y) in env.solution.t.iter().zip(&env.solution.y) {
        let mut row = vec![fmt_num(*t)];
        row.extend(y.iter().map(|v| fmt_num(*v)));
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| CommandError::numeric(e.to_string()))
}

/// Solve a comparison problem given as `kind` plus `k=v` parameters.
pub fn bounds(kind: &str, params: &str) -> Result<Envelope, CommandError> {
    let p = parse_params(params)?;
    BoundsProblem::from_params(kind, &p).map_err(classify)?.solve().map_err(classify)
}

/// One row of a sweep's `index.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub key: String,
    pub value: String,
    pub dir: String,
    pub exit_code: i32,
    pub termination: String,
    pub t_final: f64,
    pub records: usize,
    pub max_omega_final: f64,
    pub message: String,
}

/// Run the configuration once per value of `vary` (`KEY=a,b,c`), in
/// parallel, each run in its own subdirectory of `out`.
pub fn sweep(base: &toml::Table, vary: &str, out: &Path) -> Result<Vec<SweepRow>, CommandError> {
    let (key, values) = vary
        .split_once('=')
        .ok_or_else(|| CommandError::usage(format!("--vary `{vary}` is not KEY=a,b,c")))?;
    let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(CommandError::usage("--vary lists no values"));
    }
    let mut configs = Vec::new();
    for v in &values {
        let mut t = base.clone();
        set_dotted_key(&mut t, key, v).map_err(classify)?;
        let cfg = RunConfig::from_table(t).map_err(|e| CommandError::usage(format!("{key}={v}: {e}")))?;
        configs.push(cfg);
    }
    fs::create_dir_all(out).map_err(|e| CommandError::io(out, e))?;
    let rows: Vec<SweepRow> = configs
        .par_iter()
        .enumerate()
        .map(|(i, cfg)| {
            let dir_name = format!("{i:03}_{}={}", key, values[i]).replace(['/', '\\', ' '], "_");
            let dir = out.join(&dir_name);
            let mut row = SweepRow {
                index: i,
                key: key.to_string(),
                value: values[i].to_string(),
                dir: dir_name,
                exit_code: 0,
                termination: String::new(),
                t_final: f64::NAN,
                records: 0,
                max_omega_final: f64::NAN,
                message: String::new(),
            };
            match simulate(cfg, Some(&dir), false) {
                Ok(s) => {
                    row.exit_code = s.exit_code() as i32;
                    row.termination = s.termination.as_str().into();
                    row.t_final = s.t_final;
                    row.records = s.records;
                    row.max_omega_final = s.max_omega_final;
                }
                Err(e) => {
                    row.exit_code = e.code as i32;
                    row.message = e.message;
                }
            }
            row
        })
        .collect();
    let path = out.join("index.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CommandError::numeric(e.to_string()))?;
    w.write_record([
        "index",
        "key",
        "value",
        "dir",
        "exit_code",
        "termination",
        "t_final",
        "records",
        "max_omega_final",
        "message",
    ])
    .map_err(|e| CommandError::numeric(e.to_string()))?;
    for r in &rows {
        w.write_record([
            r.index.to_string(),
            r.key.clone(),
            r.value.clone(),
            r.dir.clone(),
            r.exit_code.to_string(),
            r.termination.clone(),
            fmt_num(r.t_final),
            r.records.to_string(),
            fmt_num(r.max_omega_final),
            r.message.clone(),
        ])
        .map_err(|e| CommandError::numeric(e.to_string()))?;
    }
    w.flush().map_err(|e| CommandError::io(&path, e))?;
    Ok(rows)
}

/// Load a config file as a raw table (for sweeps).
pub fn load_table(path: &Path) -> Result<toml::Table, CommandError> {
    let text = fs::read_to_string(path).map_err(|e| CommandError::usage(format!("{}: {e}", path.display())))?;
    text.parse::<toml::Table>()
        .map_err(|e| CommandError::usage(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
[model]
kind = "hl"

[grid]
length = 6.283185307179586
n = 64

[preset]
name = "paper-basic"

[run]
t_end = 0.2
record_every = 0.02
snapshot_every = 5
checkpoint_every = 3
"#;

    #[test]
    fn simulate_writes_the_contract_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::from_toml_str(BASIC).unwrap();
        let s = simulate(&cfg, Some(dir.path()), false).unwrap();
        assert_eq!(s.exit_code(), ExitCode::Success);
        assert_eq!(s.termination, Termination::TimeReached);
        let ts = fs::read_to_string(dir.path().join("timeseries.csv")).unwrap();
        let header = ts.lines().next().unwrap();
        assert_eq!(header, PERIODIC_COLUMNS.join(","));
        assert_eq!(ts.lines().count(), 12);
        assert!(dir.path().join("snapshots/0000.csv").exists());
        assert!(dir.path().join("snapshots/0010.csv").exists());
        assert!(dir.path().join("meta.json").exists());
        assert!(dir.path().join("checkpoint.json").exists());
    }

    #[test]
    fn verify_forced_failure_and_unknown_suite() {
        let opts = VerifyOptions { tolerance: Some(-1.0), ..Default::default() };
        let lines = verify("inequalities", &opts).unwrap();
        assert!(lines.iter().all(|l| !l.pass));
        assert_eq!(verify("nope", &VerifyOptions::default()).unwrap_err().code, ExitCode::Usage);
    }

    #[test]
    fn params_and_bounds() {
        let p = parse_params("I0=1, c0=0.5,horizon=10").unwrap();
        assert_eq!(p["c0"], 0.5);
        assert!(parse_params("I0").is_err());
        let env = bounds("fg", "F0=1,horizon=100").unwrap();
        assert!(env.t_star.is_some());
        assert_eq!(bounds("gengron", "I0=0,c0=1,horizon=1").unwrap_err().code, ExitCode::Usage);
    }
}
