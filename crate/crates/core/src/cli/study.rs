//! Factorial simulation study with a resumable manifest.
//!
//! Output layout under the study directory:
//!
//! ```text
//! config.json     effective configuration
//! params/         one accepted parameter file per (M, s, draw)
//! datasets/       one series CSV per (M, s, draw, T, rep)
//! results/        report rows of each finished dataset
//! manifest.txt    ids of finished datasets, appended as they finish
//! failures.log    failed draws, datasets and fits
//! report.csv      every row, in canonical order
//! aggregate.csv   means and standard errors per (method, M, s, T)
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;

use super::io::{read_params, write_atomic, write_json, write_series, ParamsFile};
use super::{draw_params, fit_series, param_id, series_seed, StudyConfig};
use crate::error::{invalid, Result};
use crate::metrics::{aggregate_reports, score_selection, StudyRow};
use crate::simulation::simulate;

const REPORT_HEADER: &str = "method,M,s,T,param_id,rep,fp,fn,sel_error,fp_rate,fn_rate,mse,seconds";

#[derive(Debug, Clone, PartialEq)]
pub struct StudySummary {
    pub rows: Vec<StudyRow>,
    /// Datasets taken from an earlier run.
    pub reused: usize,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
struct Dataset {
    dim: usize,
    s: f64,
    draw: usize,
    length: usize,
    rep: usize,
}

impl Dataset {
    fn id(&self) -> String {
        format!("{}_T{}_r{}", param_id(self.dim, self.s, self.draw), self.length, self.rep)
    }
}

/// Append-only log shared by worker threads.
struct Log(Mutex<File>);

impl Log {
    fn open(path: &Path, truncate: bool) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(!truncate)
            .write(true)
            .truncate(truncate)
            .open(path)?;
        Ok(Self(Mutex::new(file)))
    }

    fn line(&self, text: &str) -> Result<()> {
        let mut f = self.0.lock().expect("log writer panicked");
        writeln!(f, "{text}")?;
        f.flush()?;
        Ok(())
    }
}

/// Runs the factorial study described by `config` into `out`.
///
/// With `resume`, datasets listed in an existing manifest are not refitted
/// and parameter files already present are reused, so an interrupted run
/// finishes with the same report it would have produced uninterrupted.
/// Failures are logged and skipped.
pub fn run_study(config: &StudyConfig, out: &Path, resume: bool) -> Result<StudySummary> {
    config.validate()?;
    std::fs::create_dir_all(out.join("params"))?;
    std::fs::create_dir_all(out.join("datasets"))?;
    std::fs::create_dir_all(out.join("results"))?;

    let config_path = out.join("config.json");
    if resume && config_path.exists() {
        let previous: StudyConfig = serde_json::from_str(&std::fs::read_to_string(&config_path)?)?;
        if &previous != config {
            return Err(invalid!("cannot resume: {} differs from the given configuration", config_path.display()));
        }
    }
    write_json(&config_path, config)?;

    let manifest_path = out.join("manifest.txt");
    let done: HashSet<String> = if resume && manifest_path.exists() {
        std::fs::read_to_string(&manifest_path)?.lines().map(str::to_string).collect()
    } else {
        HashSet::new()
    };
    let manifest = Log::open(&manifest_path, !resume)?;
    let failures = Log::open(&out.join("failures.log"), !resume)?;
    let failed = Mutex::new(Vec::new());
    let fail = |msg: String| {
        let _ = failures.line(&msg);
        failed.lock().expect("failure list").push(msg);
    };

    let draws: Vec<(usize, f64, usize)> = config
        .dims
        .iter()
        .flat_map(|&m| config.sparsities.iter().flat_map(move |&s| (0..config.n_param_draws).map(move |k| (m, s, k))))
        .collect();
    let params: Vec<Option<ParamsFile>> = draws
        .par_iter()
        .map(|&(m, s, k)| {
            let id = param_id(m, s, k);
            let path = out.join("params").join(format!("{id}.json"));
            let loaded = if resume && path.exists() { read_params(&path).ok() } else { None };
            let drawn = match loaded {
                Some(p) => Ok(p),
                None => draw_params(config, m, s, k).and_then(|p| write_json(&path, &p).map(|_| p)),
            };
            drawn.map_err(|e| fail(format!("params {id}: {e}"))).ok()
        })
        .collect();

    let datasets: Vec<(Dataset, &ParamsFile)> = draws
        .iter()
        .zip(&params)
        .filter_map(|(&(dim, s, draw), p)| Some(((dim, s, draw), p.as_ref()?)))
        .flat_map(|((dim, s, draw), p)| {
            config.lengths.iter().flat_map(move |&length| {
                (0..config.n_series_reps).map(move |rep| {
                    (
                        Dataset {
                            dim,
                            s,
                            draw,
                            length,
                            rep,
                        },
                        p,
                    )
                })
            })
        })
        .collect();

    let reused = std::sync::atomic::AtomicUsize::new(0);
    let per_dataset: Vec<Vec<StudyRow>> = datasets
        .par_iter()
        .map(|(ds, p)| {
            let id = ds.id();
            let result_path = out.join("results").join(format!("{id}.json"));
            if done.contains(&id) {
                let saved = std::fs::read_to_string(&result_path).ok();
                if let Some(rows) = saved.and_then(|t| serde_json::from_str::<Vec<StudyRow>>(&t).ok()) {
                    reused.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    return rows;
                }
            }
            match run_dataset(config, out, ds, p, &fail) {
                Ok(rows) => {
                    let saved = write_json(&result_path, &rows).and_then(|_| manifest.line(&id));
                    if let Err(e) = saved {
                        fail(format!("dataset {id}: {e}"));
                    }
                    rows
                }
                Err(e) => {
                    fail(format!("dataset {id}: {e}"));
                    Vec::new()
                }
            }
        })
        .collect();

    let rows: Vec<StudyRow> = per_dataset.into_iter().flatten().collect();
    write_atomic(&out.join("report.csv"), format_report(&rows).as_bytes())?;
    write_atomic(&out.join("aggregate.csv"), format_aggregate(&rows).as_bytes())?;
    let mut failures = failed.into_inner().expect("failure list");
    failures.sort();
    Ok(StudySummary {
        rows,
        reused: reused.into_inner(),
        failures,
    })
}

fn run_dataset(config: &StudyConfig, out: &Path, ds: &Dataset, p: &ParamsFile, fail: &(dyn Fn(String) + Sync)) -> Result<Vec<StudyRow>> {
    let truth = p.params()?;
    let csv = out.join("datasets").join(format!("{}.csv", ds.id()));
    let seed = series_seed(config, ds.dim, ds.s, ds.draw, ds.length, ds.rep);
    let series = simulate(&truth, &config.sim_config(ds.length, seed))?;
    write_series(&csv, &series)?;
    let mut rows = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let scored = fit_series(&series, method, config.order, config)
            .and_then(|(result, seconds)| Ok((score_selection(&truth, &result)?, seconds)));
        match scored {
            Ok((mut report, seconds)) => {
                report.seconds = seconds;
                rows.push(StudyRow {
                    method,
                    dim: ds.dim,
                    s: ds.s,
                    length: ds.length,
                    param_id: ds.draw,
                    rep: ds.rep,
                    report,
                });
            }
            Err(e) => fail(format!("fit {} {method}: {e}", ds.id())),
        }
    }
    Ok(rows)
}

pub fn format_report(rows: &[StudyRow]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in rows {
        let q = &r.report;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.method, r.dim, r.s, r.length, r.param_id, r.rep, q.fp, q.fn_, q.sel_error, q.fp_rate, q.fn_rate, q.mse, q.seconds
        )
        .unwrap();
    }
    out
}

pub fn format_aggregate(rows: &[StudyRow]) -> String {
    let mut out = String::from(
        "method,M,s,T,n,sel_error_mean,sel_error_se,fp_rate_mean,fp_rate_se,fn_rate_mean,fn_rate_se,mse_mean,mse_se,seconds_mean,seconds_se\n",
    );
    for a in aggregate_reports(rows) {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            a.method,
            a.dim,
            a.s,
            a.length,
            a.count,
            a.sel_error.mean,
            a.sel_error.se,
            a.fp_rate.mean,
            a.fp_rate.se,
            a.fn_rate.mean,
            a.fn_rate.se,
            a.mse.mean,
            a.mse.se,
            a.seconds.mean,
            a.seconds.se
        )
        .unwrap();
    }
    out
}
