use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, ValueEnum};
use erem::config::{RunConfig, StudyMode};
use erem::problems::registry;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StudyArg {
    Temporal,
    Spatial,
    SingleRun,
}

impl From<StudyArg> for StudyMode {
    fn from(s: StudyArg) -> Self {
        match s {
            StudyArg::Temporal => StudyMode::Temporal,
            StudyArg::Spatial => StudyMode::Spatial,
            StudyArg::SingleRun => StudyMode::SingleRun,
        }
    }
}

/// Convergence studies for the exponential Rosenbrock-Euler method.
#[derive(Debug, Parser)]
#[command(name = "erem", version)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, required_unless_present = "list_problems")]
    config: Option<PathBuf>,

    /// Output directory (overrides `output_path`).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Study kind (overrides `study`).
    #[arg(long, value_enum)]
    study: Option<StudyArg>,

    /// Number of refinement levels (overrides `levels`).
    #[arg(long)]
    levels: Option<usize>,

    /// Worker threads for independent runs.
    #[arg(long)]
    jobs: Option<usize>,

    /// Print the registered problems and exit.
    #[arg(long)]
    list_problems: bool,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_RUN: u8 = 1;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    if cli.list_problems {
        for p in registry() {
            println!("{:<20} T = {:<5} {}", p.name, p.final_time, p.description);
        }
        return ExitCode::SUCCESS;
    }

    let resolved = match load(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot configure {jobs} worker threads: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }

    match erem::runner::run(&resolved) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(EXIT_RUN)
        }
    }
}

fn load(cli: &Cli) -> anyhow::Result<erem::config::ResolvedConfig> {
    let path = cli.config.as_ref().context("--config is required")?;
    let mut cfg = RunConfig::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(out) = &cli.out {
        cfg.output_path = out.clone();
    }
    if let Some(study) = cli.study {
        cfg.study = study.into();
    }
    if let Some(levels) = cli.levels {
        cfg.levels = levels;
    }
    Ok(cfg.resolve()?)
}
