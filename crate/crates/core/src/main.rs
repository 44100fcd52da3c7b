use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use gvar::cli::{fit_file, generate, run_study, simulate_file, StudyConfig};
use gvar::selection::Method;

/// Sparse support estimation for Poisson GVAR models.
#[derive(Parser)]
#[command(name = "gvar", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw accepted parameter sets for every (M, s) cell of a study config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a series from a parameter file.
    Simulate {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        length: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the support of a series CSV.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// naive, cv, support-agg, model-agg or combined
        #[arg(long, value_parser = parse_method)]
        method: Method,
        #[arg(long, default_value_t = 1)]
        order: usize,
        /// Study config whose `selection` and `solver` sections are used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a factorial simulation study.
    Study {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to the number of cores.
        #[arg(long)]
        threads: Option<usize>,
        /// Keep datasets already recorded in the manifest.
        #[arg(long)]
        resume: bool,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: gvar::GvarError| e.to_string())
}

fn load_config(path: &PathBuf) -> Result<StudyConfig> {
    StudyConfig::load(path).with_context(|| format!("reading config {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate { config, out } => {
            let cfg = load_config(&config)?;
            let files = generate(&cfg, &out).context("generating parameters")?;
            eprintln!("wrote {} parameter files to {}", files.len(), out.display());
        }
        Command::Simulate {
            params,
            length,
            seed,
            out,
        } => {
            simulate_file(&params, length, seed, &out).with_context(|| format!("simulating from {}", params.display()))?;
        }
        Command::Fit {
            data,
            method,
            order,
            config,
            out,
        } => {
            let cfg = match config {
                Some(p) => load_config(&p)?,
                None => StudyConfig::default(),
            };
            let result = fit_file(&data, method, order, &cfg, &out).with_context(|| format!("fitting {}", data.display()))?;
            eprintln!("{}: {} nonzero lag coefficients in {:.2}s", result.method, result.support.len(), result.seconds);
        }
        Command::Study {
            config,
            out,
            threads,
            resume,
        } => {
            if let Some(n) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .context("configuring the thread pool")?;
            }
            let cfg = load_config(&config)?;
            let summary = run_study(&cfg, &out, resume).context("running study")?;
            eprintln!(
                "{} report rows ({} datasets reused), {} failures",
                summary.rows.len(),
                summary.reused,
                summary.failures.len()
            );
            for f in &summary.failures {
                eprintln!("  {f}");
            }
        }
    }
    Ok(())
}
