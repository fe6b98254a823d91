use std::path::PathBuf;
use std::process::ExitCode as ProcessExit;

use clap::{Parser, Subcommand};
use hlblowup::commands::{self, CommandError, ExitCode, VerifyOptions};
use hlblowup::config::RunConfig;

#[derive(Parser)]
#[command(name = "hlblowup", version, about = "Boundary-model blow-up lab")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evolve a configuration and write timeseries, snapshots and metadata.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override grid.n (periodic) or grid.m (log line).
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        resume: bool,
    },
    /// Check kernel, quadratic-form and inequality properties.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, allow_negative_numbers = true)]
        tolerance: Option<f64>,
        /// Also check the inequalities along this run.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Integrate a comparison ODE and report its blow-up time.
    Bounds {
        #[arg(long)]
        kind: String,
        /// Comma-separated key=value list.
        #[arg(long, default_value = "")]
        params: String,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a configuration for several values of one key.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// KEY=a,b,c
        #[arg(long)]
        vary: String,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
}

fn load(path: &PathBuf, resolution: Option<usize>) -> Result<RunConfig, CommandError> {
    let cfg = RunConfig::load(path).map_err(|e| CommandError::usage(e.to_string()))?;
    match resolution {
        Some(n) => cfg.with_resolution(n).map_err(|e| CommandError::usage(e.to_string())),
        None => Ok(cfg),
    }
}

fn run(cli: Cli) -> Result<ExitCode, CommandError> {
    match cli.cmd {
        Cmd::Simulate { config, out, resolution, resume } => {
            let cfg = load(&config, resolution)?;
            let s = commands::simulate(&cfg, out.as_deref(), resume)?;
            println!(
                "termination={} t_final={} records={} steps={} max_omega={}",
                s.termination.as_str(),
                s.t_final,
                s.records,
                s.steps,
                s.max_omega_final
            );
            match (s.blowup_time_estimate, &s.blowup_estimate_note) {
                (Some(t), _) => println!("blowup_time_estimate={t}"),
                (None, Some(note)) => println!("blowup_time_estimate=none ({note})"),
                _ => {}
            }
            Ok(s.exit_code())
        }
        Cmd::Verify { suite, trials, seed, tolerance, config } => {
            let config = config.map(|p| load(&p, None)).transpose()?;
            let lines = commands::verify(&suite, &VerifyOptions { trials, seed, tolerance, config })?;
            for l in &lines {
                println!("{l}");
            }
            let failed = lines.iter().filter(|l| !l.pass).count();
            println!("{} checks, {} failed", lines.len(), failed);
            Ok(if failed == 0 { ExitCode::Success } else { ExitCode::VerificationFailed })
        }
        Cmd::Bounds { kind, params, out } => {
            let env = commands::bounds(&kind, &params)?;
            let fmt = |v: Option<f64>| v.map_or("none".to_string(), |v| v.to_string());
            eprintln!("t_star={} t_star_upper={}", fmt(env.t_star), fmt(env.t_star_upper));
            match out {
                Some(p) => {
                    let f = std::fs::File::create(&p)
                        .map_err(|e| CommandError::numeric(format!("{}: {e}", p.display())))?;
                    commands::write_envelope(&env, f)?;
                }
                None => commands::write_envelope(&env, std::io::stdout().lock())?,
            }
            Ok(ExitCode::Success)
        }
        Cmd::Sweep { config, vary, out } => {
            let table = commands::load_table(&config)?;
            let rows = commands::sweep(&table, &vary, &out)?;
            for r in &rows {
                println!("{} {}={} exit={} {}", r.dir, r.key, r.value, r.exit_code, r.termination);
            }
            let worst = rows.iter().map(|r| r.exit_code).max().unwrap_or(0);
            Ok(match worst {
                0 => ExitCode::Success,
                2 => ExitCode::Usage,
                _ => ExitCode::Numeric,
            })
        }
    }
}

fn main() -> ProcessExit {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ProcessExit::from(if e.use_stderr() { ExitCode::Usage as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ProcessExit::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ProcessExit::from(e.code as u8)
        }
    }
}
