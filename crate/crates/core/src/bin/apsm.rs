use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use apsm_core::harness::{format_float, invariants, run_experiment, write_outputs, ExperimentConfig};
use apsm_core::{l1ball_project, l1ball_project_vm, DiagonalMetric, Error, Result, WeightedL1Ball};

#[derive(Parser)]
#[command(name = "apsm", version, about = "Sparse diffusion learning experiments and kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write summary.csv, per-run CSVs and plot.gp.
    Simulate {
        /// JSON experiment config. Every field is optional.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated arm list, e.g. proposed,apwl1.
        #[arg(long, value_delimiter = ',')]
        arms: Option<Vec<String>>,
    },
    /// Project a vector onto {x : sum w_i |x_i| <= rho} and print the result.
    ProjectL1 {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        rho: f64,
        /// Inverse metric diagonal; Euclidean projection when absent.
        #[arg(long)]
        metric: Option<PathBuf>,
    },
    /// Run the randomized oracle suites.
    CheckInvariants {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                message: format!("not a number: {t:?}"),
            })
        })
        .collect()
}

fn simulate(config: &Path, seed: Option<u64>, out: Option<PathBuf>, arms: Option<Vec<String>>) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output = o;
    }
    if let Some(a) = arms {
        cfg.arms = a;
    }
    cfg.validate()?;
    let output = run_experiment(&cfg)?;
    let summary = write_outputs(&output, &cfg.output)?;
    println!("{}", summary.display());
    Ok(())
}

fn project(input: &Path, weights: &Path, rho: f64, metric: Option<&Path>) -> Result<()> {
    let h = read_vector(input)?;
    let ball = WeightedL1Ball::new(read_vector(weights)?, rho)?;
    let x = match metric {
        Some(p) => l1ball_project_vm(&h, &ball, &DiagonalMetric::from_inverse_diagonal(read_vector(p)?)?)?,
        None => l1ball_project(&h, &ball)?,
    };
    for v in x {
        println!("{}", format_float(v));
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("THREADS={raw:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Simulate { config, seed, out, arms } => simulate(&config, seed, out, arms).map(|()| true),
        Command::ProjectL1 { input, weights, rho, metric } => {
            project(&input, &weights, rho, metric.as_deref()).map(|()| true)
        }
        Command::CheckInvariants { seed } => {
            let outcomes = invariants::run_all(seed);
            for o in &outcomes {
                println!("{o}");
            }
            Ok(outcomes.iter().all(|o| o.passed()))
        }
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
