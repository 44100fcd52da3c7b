//! File formats: series CSV, parameter JSON and fit-result JSON.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, GvarError, Result};
use crate::model::{CountSeries, GvarParams};
use crate::selection::MethodResult;

/// Reads a series CSV with header `t,x1,...,xM` and one integer row per step.
pub fn read_series(path: &Path) -> Result<CountSeries> {
    let text = std::fs::read_to_string(path)?;
    parse_series(&text, &path.display().to_string())
}

pub fn parse_series(text: &str, origin: &str) -> Result<CountSeries> {
    let err = |line: usize, msg: String| GvarError::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let dim = cols.len().saturating_sub(1);
    let expected: Vec<String> = std::iter::once("t".to_string()).chain((1..=dim).map(|m| format!("x{m}"))).collect();
    if dim == 0 || cols != expected {
        return Err(err(1, format!("header must be t,x1,...,xM; got '{header}'")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != dim + 1 {
            return Err(err(i + 1, format!("expected {} fields, found {}", dim + 1, cells.len())));
        }
        cells[0]
            .parse::<u64>()
            .map_err(|_| err(i + 1, format!("time index '{}' is not a nonnegative integer", cells[0])))?;
        let row = cells[1..]
            .iter()
            .map(|c| c.parse::<u64>().map_err(|_| err(i + 1, format!("'{c}' is not a nonnegative integer count"))))
            .collect::<Result<Vec<u64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(err(1, "no data rows".into()));
    }
    CountSeries::from_rows(&rows)
}

pub fn format_series(series: &CountSeries) -> String {
    let mut out = String::from("t");
    for m in 1..=series.dim() {
        write!(out, ",x{m}").unwrap();
    }
    out.push('\n');
    for (t, row) in series.data().rows().into_iter().enumerate() {
        write!(out, "{t}").unwrap();
        for v in row {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_series(path: &Path, series: &CountSeries) -> Result<()> {
    write_atomic(path, format_series(series).as_bytes())
}

/// Parameter file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    #[serde(rename = "M")]
    pub dim: usize,
    #[serde(rename = "D")]
    pub order: usize,
    pub nu: Vec<f64>,
    /// `A[d][m][j]`: row `m`, column `j` of the lag-`d+1` matrix.
    #[serde(rename = "A")]
    pub lag_mats: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub recoverability: Option<f64>,
}

impl ParamsFile {
    pub fn new(params: &GvarParams, seed: Option<u64>, recoverability: Option<f64>) -> Self {
        Self {
            dim: params.dim(),
            order: params.order(),
            nu: params.nu().to_vec(),
            lag_mats: params.lag_mats().iter().map(matrix_rows).collect(),
            seed,
            recoverability,
        }
    }

    pub fn params(&self) -> Result<GvarParams> {
        if self.nu.len() != self.dim || self.lag_mats.len() != self.order {
            return Err(invalid!("nu must have M entries and A must have D matrices"));
        }
        let mats = self
            .lag_mats
            .iter()
            .map(|a| {
                if a.len() != self.dim || a.iter().any(|r| r.len() != self.dim) {
                    return Err(invalid!("each lag matrix must be {0} x {0}", self.dim));
                }
                Ok(Array2::from_shape_fn((self.dim, self.dim), |(m, j)| a[m][j]))
            })
            .collect::<Result<Vec<_>>>()?;
        GvarParams::new(Array1::from_vec(self.nu.clone()), mats)
    }
}

fn matrix_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn read_params(path: &Path) -> Result<ParamsFile> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Writes through a temporary sibling so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Fit-result file contents. Lag coordinates are 1-based `(lag, row, col)`;
/// failed error cells are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub method: String,
    #[serde(rename = "M")]
    pub dim: usize,
    #[serde(rename = "D")]
    pub order: usize,
    pub support: Vec<[usize; 3]>,
    pub nu: Vec<f64>,
    #[serde(rename = "A")]
    pub lag_mats: Vec<Vec<Vec<f64>>>,
    pub lambdas: Vec<f64>,
    pub chosen_lambdas: Vec<f64>,
    pub gamma: Option<f64>,
    pub per_partition_errors: Vec<Vec<Option<f64>>>,
    pub partition_supports: Vec<Vec<[usize; 3]>>,
    pub seconds: f64,
}

fn triples(s: &crate::model::SupportSet) -> Vec<[usize; 3]> {
    s.iter().map(|c| [c.lag + 1, c.row + 1, c.col + 1]).collect()
}

impl ResultFile {
    pub fn new(result: &MethodResult, seconds: f64) -> Self {
        let p = &result.params;
        Self {
            method: result.method.to_string(),
            dim: p.dim(),
            order: p.order(),
            support: triples(&result.support),
            nu: p.nu().to_vec(),
            lag_mats: p.lag_mats().iter().map(matrix_rows).collect(),
            lambdas: result.lambdas.clone(),
            chosen_lambdas: result.chosen_lambdas.clone(),
            gamma: result.gamma,
            per_partition_errors: result
                .per_partition_errors
                .iter()
                .map(|r| r.iter().map(|&e| e.is_finite().then_some(e)).collect())
                .collect(),
            partition_supports: result.partition_supports.iter().map(triples).collect(),
            seconds,
        }
    }
}
