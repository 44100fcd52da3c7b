//! Support-recovery scores and their aggregation over study cells.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{GvarParams, SupportSet};
use crate::selection::{Method, MethodResult};

/// Support-recovery quality of one estimate against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// `(fp + fn) / (D·M²)`.
    pub sel_error: f64,
    /// `fp` over the number of true zeros; 0 when there are none.
    pub fp_rate: f64,
    /// `fn` over the number of true nonzeros; 0 when there are none.
    pub fn_rate: f64,
    /// Mean squared error over all lag coefficients.
    pub mse: f64,
    pub seconds: f64,
}

/// Scores an estimated support and coefficients against the truth. Support
/// membership is exact nonzero-ness on both sides.
pub fn score_support(truth: &GvarParams, support: &SupportSet, estimate: &GvarParams) -> Result<SelectionReport> {
    let (dim, order) = (truth.dim(), truth.order());
    if support.dim() != dim || support.order() != order || estimate.dim() != dim || estimate.order() != order {
        return Err(invalid!("estimate dimensions do not match the truth ({dim} x {dim} x {order})"));
    }
    let true_support = truth.support();
    let fp = support.difference_count(&true_support);
    let fn_ = true_support.difference_count(support);
    let ambient = support.ambient_size();
    let nonzero = true_support.len();
    let zero = ambient - nonzero;
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let sq: f64 = truth
        .lag_mats()
        .iter()
        .zip(estimate.lag_mats())
        .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)))
        .sum();
    Ok(SelectionReport {
        fp,
        fn_,
        sel_error: ratio(fp + fn_, ambient),
        fp_rate: ratio(fp, zero),
        fn_rate: ratio(fn_, nonzero),
        mse: sq / ambient as f64,
        seconds: 0.0,
    })
}

pub fn score_selection(truth: &GvarParams, estimate: &MethodResult) -> Result<SelectionReport> {
    score_support(truth, &estimate.support, &estimate.params)
}

/// One row of a study report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub method: Method,
    #[serde(rename = "M")]
    pub dim: usize,
    pub s: f64,
    #[serde(rename = "T")]
    pub length: usize,
    pub param_id: usize,
    pub rep: usize,
    #[serde(flatten)]
    pub report: SelectionReport,
}

/// Mean and standard error of one quantity over a group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / n;
        let se = if n > 1.0 {
            let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self { mean, se }
    }
}

/// Averages over the rows of one `(method, M, s, T)` cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateRow {
    pub method: Method,
    pub dim: usize,
    pub s: f64,
    pub length: usize,
    pub count: usize,
    pub sel_error: MeanSe,
    pub fp_rate: MeanSe,
    pub fn_rate: MeanSe,
    pub mse: MeanSe,
    pub seconds: MeanSe,
}

/// Groups rows by `(method, M, s, T)` and reports means and standard errors,
/// ordered by method then `M`, `s`, `T`.
pub fn aggregate_reports(rows: &[StudyRow]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(Method, usize, u64, usize), Vec<&SelectionReport>> = BTreeMap::new();
    for r in rows {
        // s is nonnegative, so its bit pattern orders like its value
        groups.entry((r.method, r.dim, r.s.to_bits(), r.length)).or_default().push(&r.report);
    }
    groups
        .into_iter()
        .map(|((method, dim, s, length), reps)| {
            let stat = |f: fn(&SelectionReport) -> f64| MeanSe::of(reps.iter().map(|r| f(r)));
            AggregateRow {
                method,
                dim,
                s: f64::from_bits(s),
                length,
                count: reps.len(),
                sel_error: stat(|r| r.sel_error),
                fp_rate: stat(|r| r.fp_rate),
                fn_rate: stat(|r| r.fn_rate),
                mse: stat(|r| r.mse),
                seconds: stat(|r| r.seconds),
            }
        })
        .collect()
}
