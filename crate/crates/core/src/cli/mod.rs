//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid configuration,
//! 3 Newton failure after the regularization ladder, 4 a matrix identity
//! violated during `verify-matrices`.

pub mod config;
pub mod drivers;
pub mod initial;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use config::RunConfig;

use crate::error::{Error, Result};
use crate::mobility::ModelSpec;
use output::write_csv;

#[derive(Debug, Parser)]
#[command(name = "mscahn", version, about = "Maxwell-Stefan-Cahn-Hilliard cross-diffusion simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one configuration and write trace.csv, final_state.csv, meta.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides output.directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rerun with several truncation parameters and fit the negativity bound.
    SweepDelta {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        deltas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relative-functional stability against perturbed initial data.
    WeakStrong {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        amplitudes: Vec<f64>,
        /// Required lower bound of the base initial data.
        #[arg(long, default_value_t = 0.05)]
        min_base: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample random compositions and check the mobility identities.
    VerifyMatrices {
        /// JSON model block.
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Temporal self-convergence study.
    DtRefine {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        dts: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NewtonDivergence { .. } => 3,
        Error::Verification(_) => 4,
        Error::Io(_) => 1,
        _ => 2,
    }
}

fn out_dir(cfg: &RunConfig, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| cfg.output.directory.clone())
}

fn write_table(dir: &Path, name: &str, (header, rows): (String, Vec<String>)) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    write_csv(&path, &header, &rows)?;
    println!("{header}");
    for r in &rows {
        println!("{r}");
    }
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let dir = out_dir(&cfg, out);
            let outcome = drivers::run(&cfg, &dir)?;
            println!(
                "{} steps, final lyapunov {}, output in {}",
                cfg.steps(),
                outcome.trace.last().map_or(f64::NAN, |r| r.lyapunov),
                dir.display()
            );
            Ok(())
        }
        Command::SweepDelta { config, deltas, out } => {
            let cfg = RunConfig::load(&config)?;
            let report = drivers::sweep_delta(&cfg, &deltas)?;
            write_table(&out_dir(&cfg, out), "sweep_delta.csv", report.to_csv(cfg.model.n))
        }
        Command::WeakStrong {
            config,
            amplitudes,
            min_base,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let rows = drivers::weak_strong(&cfg, &amplitudes, min_base)?;
            write_table(&out_dir(&cfg, out), "weak_strong.csv", drivers::weak_strong_csv(&rows))
        }
        Command::VerifyMatrices { model, samples, seed } => {
            let text = std::fs::read_to_string(&model)
                .map_err(|e| Error::Config(format!("{}: {e}", model.display())))?;
            let spec: ModelSpec =
                serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            let report = drivers::verify_matrices(&spec, samples, seed)?;
            println!("samples={} seed={} rho={:.16e}", report.samples, report.seed, report.rho);
            for c in &report.checks {
                let status = if c.passed() { "ok" } else { "FAIL" };
                println!("{:<18} worst={:.3e} tol={:.0e} {status}", c.name, c.worst, c.tolerance);
            }
            match report.checks.iter().find(|c| !c.passed()) {
                None => Ok(()),
                Some(c) => Err(Error::Verification(serde_json::to_string(c)?)),
            }
        }
        Command::DtRefine { config, dts, out } => {
            let cfg = RunConfig::load(&config)?;
            let rows = drivers::dt_refine(&cfg, &dts)?;
            write_table(&out_dir(&cfg, out), "dt_refine.csv", drivers::refine_csv(&rows))
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
