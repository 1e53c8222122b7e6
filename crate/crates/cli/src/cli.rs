use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use parfit_core::{Backend, FitResult};

use crate::commands::{cmd_bench, cmd_fit, cmd_generate, cmd_plotdata, load_config, load_data, plot_text};

#[derive(Debug, Parser)]
#[command(name = "parfit", version, about = "Toy generation, fitting and thread-scaling benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Serial,
    Threads,
}

#[derive(Debug, Args)]
pub struct ExecArgs {
    /// Worker threads; overrides PARFIT_THREADS.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendArg>,
}

impl ExecArgs {
    pub fn backend(&self) -> Result<Backend> {
        Ok(match (self.backend, self.threads) {
            (Some(BackendArg::Serial), Some(_)) => bail!("--threads cannot be combined with --backend serial"),
            (Some(BackendArg::Serial), None) => Backend::serial(),
            (_, Some(n)) => Backend::threads(n)?,
            (_, None) => Backend::from_env()?,
        })
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample toy events from the configured model at its initial values.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        events: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Fit the model to a data file and print the report.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Time the same fit at several thread counts.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated thread counts, including 1.
        #[arg(long, value_delimiter = ',', required = true)]
        threads: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write model and data densities along one observable.
    Plotdata {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Fit report whose parameter values are used instead of the initial ones.
        #[arg(long)]
        result: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        points: usize,
        /// Observable to plot when the model has several.
        #[arg(long)]
        project: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate { config, events, seed, out, exec } => {
            let cfg = load_config(&config)?;
            let data = cmd_generate(&cfg, events, seed, &exec.backend()?)?;
            let mut buf = Vec::new();
            data.write_text(&mut buf)?;
            emit(out.as_deref(), std::str::from_utf8(&buf)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Fit { config, data, out, exec } => {
            let cfg = load_config(&config)?;
            let (built, _) = cfg.build()?;
            let ds = load_data(&data, &built)?;
            let r = cmd_fit(&cfg, &ds, &exec.backend()?)?;
            emit(out.as_deref(), &r.to_report())?;
            Ok(if r.is_converged() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Bench { config, data, threads, repetitions, out } => {
            let cfg = load_config(&config)?;
            let (built, _) = cfg.build()?;
            let ds = load_data(&data, &built)?;
            let report = cmd_bench(&cfg, &ds, &threads, repetitions)?;
            emit(out.as_deref(), &report.to_csv())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Plotdata { config, data, result, points, project, out } => {
            let cfg = load_config(&config)?;
            let (built, _) = cfg.build()?;
            let ds = load_data(&data, &built)?;
            let fitted = match result {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    Some(FitResult::from_report(&text).with_context(|| format!("parsing {}", p.display()))?)
                }
                None => None,
            };
            let rows = cmd_plotdata(&cfg, &ds, fitted.as_ref(), points, project.as_deref())?;
            emit(out.as_deref(), &plot_text(&rows))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
