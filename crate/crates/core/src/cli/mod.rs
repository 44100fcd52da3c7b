//! Commands behind the `gvar` binary.
//!
//! Every random draw is seeded from `master_seed` and the indices of the
//! task that makes it, so outputs do not depend on thread scheduling.

mod config;
mod io;
mod study;

pub use config::{ProposalSection, SimulationSection, StudyConfig};
pub use io::{format_series, parse_series, read_params, read_series, write_json, write_series, ParamsFile, ResultFile};
pub use study::{run_study, StudySummary};

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::error::Result;
use crate::rng::{derive_seed, seeded};
use crate::selection::{select, Method, MethodResult};
use crate::simulation::{generate_accepted, simulate, SimConfig};

const TAG_PARAMS: u64 = 1;
const TAG_SERIES: u64 = 2;

/// File stem identifying parameter draw `draw` of the `(M, s)` cell.
pub fn param_id(dim: usize, sparsity: f64, draw: usize) -> String {
    format!("M{dim}_s{sparsity}_p{draw}")
}

/// Seed of parameter draw `draw` in the `(M, s)` cell.
pub fn param_seed(config: &StudyConfig, dim: usize, sparsity: f64, draw: usize) -> u64 {
    derive_seed(config.master_seed, &[TAG_PARAMS, dim as u64, sparsity.to_bits(), draw as u64])
}

/// Seed of replicate `rep` of length `length` simulated from a parameter draw.
pub fn series_seed(config: &StudyConfig, dim: usize, sparsity: f64, draw: usize, length: usize, rep: usize) -> u64 {
    derive_seed(
        config.master_seed,
        &[TAG_SERIES, dim as u64, sparsity.to_bits(), draw as u64, length as u64, rep as u64],
    )
}

/// Draws and scores one accepted parameter set.
pub fn draw_params(config: &StudyConfig, dim: usize, sparsity: f64, draw: usize) -> Result<ParamsFile> {
    let seed = param_seed(config, dim, sparsity, draw);
    let accepted = generate_accepted(&config.proposal_config(dim, sparsity), &mut seeded(seed))?;
    Ok(ParamsFile::new(&accepted.params, Some(seed), Some(accepted.score)))
}

/// Writes `n_param_draws` accepted parameter files for every `(M, s)` cell
/// into `out`. When some draws exhaust their proposals, the others are still
/// written and the first failure is returned.
pub fn generate(config: &StudyConfig, out: &Path) -> Result<Vec<PathBuf>> {
    config.validate()?;
    std::fs::create_dir_all(out)?;
    let jobs: Vec<(usize, f64, usize)> = config
        .dims
        .iter()
        .flat_map(|&m| config.sparsities.iter().flat_map(move |&s| (0..config.n_param_draws).map(move |k| (m, s, k))))
        .collect();
    let results: Vec<Result<PathBuf>> = jobs
        .par_iter()
        .map(|&(m, s, k)| {
            let file = draw_params(config, m, s, k).map_err(|e| e.in_task(param_id(m, s, k)))?;
            let path = out.join(format!("{}.json", param_id(m, s, k)));
            write_json(&path, &file)?;
            Ok(path)
        })
        .collect();
    let (ok, failed): (Vec<_>, Vec<_>) = results.into_iter().partition(|r| r.is_ok());
    if let Some(Err(first)) = failed.into_iter().next() {
        return Err(first);
    }
    Ok(ok.into_iter().map(|r| r.expect("partitioned")).collect())
}

/// Simulates `length` steps from a parameter file and writes the series CSV.
pub fn simulate_file(params: &Path, length: usize, seed: u64, out: &Path) -> Result<()> {
    let params = read_params(params)?.params()?;
    let series = simulate(
        &params,
        &SimConfig {
            length,
            seed,
            ..Default::default()
        },
    )?;
    write_series(out, &series)
}

/// Runs `method` on a series with the `selection` and `solver` settings of
/// `config`, timing the whole selection.
pub fn fit_series(
    series: &crate::model::CountSeries,
    method: Method,
    order: usize,
    config: &StudyConfig,
) -> Result<(MethodResult, f64)> {
    let start = Instant::now();
    let result = select(method, series, order, &config.selection, &config.solver)?;
    Ok((result, start.elapsed().as_secs_f64()))
}

/// Fits a series CSV and writes the result JSON.
pub fn fit_file(data: &Path, method: Method, order: usize, config: &StudyConfig, out: &Path) -> Result<ResultFile> {
    let series = read_series(data)?;
    let (result, seconds) = fit_series(&series, method, order, config)?;
    let file = ResultFile::new(&result, seconds);
    write_json(out, &file)?;
    Ok(file)
}
