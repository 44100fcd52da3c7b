//! Support selection by cross-validation, support aggregation and model
//! aggregation.
//!
//! All estimators share one skeleton. The series is split into `J_outer`
//! leave-one-block-out partitions. On each training part a support is
//! estimated for every `λ` of the path and refitted by maximum likelihood,
//! and the refit is scored by its deviance on the held-out block. The
//! estimators differ in two switches:
//!
//! * how a support is estimated at `λ`: the plain LASSO support, or the
//!   aggregated support `Ŝ_agg` that keeps coordinates selected on at least a
//!   proportion `π` of `J_inner` inner resamples of the training part;
//! * how the partitions are combined: one `λ*` minimizing the mean error
//!   (then re-estimated on the full data), or one `λ*_j` per partition whose
//!   supports are kept when they occur in more than a fraction `γ` of
//!   partitions.
//!
//! | method        | support at `λ` | combination         |
//! |---------------|----------------|---------------------|
//! | `cv`          | LASSO          | mean-error `λ*`     |
//! | `support_agg` | `Ŝ_agg`        | mean-error `λ*`     |
//! | `model_agg`   | LASSO          | frequency filter    |
//! | `combined`    | `Ŝ_agg`        | frequency filter    |
//!
//! `naive` chooses `λ` by the held-out deviance of the penalized estimate
//! itself and returns that estimate without refitting.
//!
//! Penalties are given for the full series. A fit on a design with `n` rows
//! uses `λ·n/N`, where `N` is the row count of the full design, so a given
//! `λ` means the same per-observation penalty on every resample.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, GvarError, Result};
use crate::model::{build_design, build_design_excluding, CountSeries, DesignPair, GvarParams, SupportSet};
use crate::resampling::{leave_one_out_segmented, plan_blocks, BlockPlan, Resample};
use crate::solver::{fit_design, narrowed_path, path_design, refit_design, FitResult, Penalty, RegPath, SolverConfig};

/// Slack for floating-point comparisons of support counts against `π·n`.
const COUNT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Naive,
    Cv,
    SupportAgg,
    ModelAgg,
    Combined,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Naive, Method::Cv, Method::SupportAgg, Method::ModelAgg, Method::Combined];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::Cv => "cv",
            Method::SupportAgg => "support_agg",
            Method::ModelAgg => "model_agg",
            Method::Combined => "combined",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = GvarError;

    /// Accepts both `support_agg` and `support-agg` spellings.
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| invalid!("unknown method '{s}' (expected naive, cv, support-agg, model-agg or combined)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// Elastic-net mixing; 1 is the LASSO.
    pub alpha: f64,
    pub n_lambda: usize,
    /// Smallest path value as a fraction of `λ_max`.
    pub min_ratio: f64,
    /// Restrict the path to where the support size changes, found by a pilot fit.
    pub narrow_path: bool,
    pub pilot_points: usize,
    pub j_outer: usize,
    pub j_inner: usize,
    /// Minimum proportion of inner supports a coordinate must appear in.
    pub pi: f64,
    /// Frequency threshold for model aggregation. `None` selects it by
    /// cross-validation over `gamma_grid`.
    pub gamma: Option<f64>,
    /// Candidates for `γ`; by default every `k/J_outer` in `(0.5, 1)`.
    pub gamma_grid: Option<Vec<f64>>,
    /// Folds of the outer cross-validation used to choose `γ`.
    pub gamma_folds: usize,
    /// Drop training rows whose lags straddle a resampling junction.
    pub drop_transition: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            n_lambda: 50,
            min_ratio: 1e-3,
            narrow_path: true,
            pilot_points: 20,
            j_outer: 10,
            j_inner: 10,
            pi: 0.8,
            gamma: None,
            gamma_grid: None,
            gamma_folds: 3,
            drop_transition: false,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(invalid!("alpha must lie in (0, 1]"));
        }
        if self.n_lambda < 2 || !(self.min_ratio > 0.0 && self.min_ratio < 1.0) || self.pilot_points < 3 {
            return Err(invalid!("path needs n_lambda >= 2, pilot_points >= 3 and min_ratio in (0, 1)"));
        }
        if self.j_outer == 0 || self.j_inner == 0 {
            return Err(invalid!("j_outer and j_inner must be at least 1"));
        }
        if !(self.pi > 0.0 && self.pi <= 1.0) {
            return Err(invalid!("pi must lie in (0, 1], got {}", self.pi));
        }
        if let Some(g) = self.gamma {
            check_gamma(g)?;
        }
        if let Some(grid) = &self.gamma_grid {
            if grid.is_empty() {
                return Err(invalid!("gamma_grid is empty"));
            }
            grid.iter().try_for_each(|&g| check_gamma(g))?;
        }
        if self.gamma.is_none() && self.gamma_folds < 2 {
            return Err(invalid!("gamma_folds must be at least 2"));
        }
        Ok(())
    }

    /// The `γ` candidates, ascending.
    pub fn gamma_candidates(&self) -> Vec<f64> {
        let mut grid = match &self.gamma_grid {
            Some(g) => g.clone(),
            None => default_gamma_grid(self.j_outer),
        };
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        grid
    }
}

fn check_gamma(g: f64) -> Result<()> {
    if !(0.0..1.0).contains(&g) {
        return Err(invalid!("gamma must lie in [0, 1), got {g}"));
    }
    Ok(())
}

/// Every `k/J` strictly between one half and one; `{0.5}` when there is none.
pub fn default_gamma_grid(j_outer: usize) -> Vec<f64> {
    let grid: Vec<f64> = (1..j_outer)
        .map(|k| k as f64 / j_outer as f64)
        .filter(|&g| g > 0.5)
        .collect();
    if grid.is_empty() {
        vec![0.5]
    } else {
        grid
    }
}

/// Outcome of one selection method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: Method,
    pub support: SupportSet,
    /// Maximum-likelihood refit on `support` (the penalized fit for `naive`).
    pub params: GvarParams,
    /// The path, full-data scale.
    pub lambdas: Vec<f64>,
    /// `λ*`, or `λ*_j` for each partition under model aggregation.
    pub chosen_lambdas: Vec<f64>,
    pub gamma: Option<f64>,
    /// `e_j^λ`, one row per partition, `+∞` where the fit failed.
    pub per_partition_errors: Vec<Vec<f64>>,
    /// `Ŝ*_j` under model aggregation; empty otherwise.
    pub partition_supports: Vec<SupportSet>,
}

/// Held-out deviance of `params` on a test design; overflow counts as `+∞`.
pub fn error_metric(test: &DesignPair, params: &GvarParams) -> Result<f64> {
    match test.deviance(params) {
        Ok(d) => Ok(d),
        Err(GvarError::NumericOverflow { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Keeps coordinates present in at least `π·n` of the `n` supports.
pub fn aggregate_supports(supports: &[SupportSet], pi: f64) -> Result<SupportSet> {
    let n = supports.len() as f64;
    filter_by_count(supports, |count| count as f64 >= pi * n - COUNT_EPS)
}

/// Keeps coordinates whose selection frequency among `supports` exceeds `γ`.
pub fn frequency_filter(supports: &[SupportSet], gamma: f64) -> Result<SupportSet> {
    let n = supports.len() as f64;
    filter_by_count(supports, |count| count as f64 / n > gamma)
}

fn filter_by_count(supports: &[SupportSet], keep: impl Fn(usize) -> bool) -> Result<SupportSet> {
    let first = supports.first().ok_or_else(|| GvarError::Selection("no supports to aggregate".into()))?;
    let (dim, order) = (first.dim(), first.order());
    if supports.iter().any(|s| s.dim() != dim || s.order() != order) {
        return Err(invalid!("supports have mismatched dimensions"));
    }
    let mut counts = std::collections::BTreeMap::new();
    for c in supports.iter().flat_map(|s| s.iter()) {
        *counts.entry(*c).or_insert(0usize) += 1;
    }
    SupportSet::from_coords(dim, order, counts.into_iter().filter(|&(_, k)| keep(k)).map(|(c, _)| c))
}

/// Regularization path for `series` according to `config`.
pub fn resolve_path(series: &CountSeries, order: usize, config: &SelectionConfig, solver: &SolverConfig) -> Result<RegPath> {
    config.validate()?;
    let design = build_design(series, order)?;
    if config.narrow_path {
        narrowed_path(&design, config.alpha, config.n_lambda, config.min_ratio, config.pilot_points, solver)
    } else {
        path_design(&design, config.alpha, config.n_lambda, config.min_ratio)
    }
}

/// A series together with the positions where it is discontinuous in time.
#[derive(Debug, Clone)]
struct Segmented {
    series: CountSeries,
    breaks: Vec<usize>,
}

impl Segmented {
    fn whole(series: &CountSeries) -> Self {
        Self {
            series: series.clone(),
            breaks: Vec::new(),
        }
    }

    fn from_train(r: &Resample) -> Self {
        Self {
            series: r.train.clone(),
            breaks: r.train_breaks.clone(),
        }
    }

    fn plan(&self, n_blocks: usize, order: usize, drop: bool) -> Result<BlockPlan> {
        Ok(plan_blocks(self.series.len(), n_blocks, order)?.with_drop_transition(drop))
    }

    fn resample(&self, plan: &BlockPlan, j: usize) -> Result<Resample> {
        leave_one_out_segmented(&self.series, &self.breaks, plan, j)
    }

    /// Design of the whole segmented series; rows straddling a break are
    /// dropped when `drop` is set.
    fn design(&self, order: usize, drop: bool) -> Result<DesignPair> {
        let exclude: Vec<usize> = if drop {
            self.breaks.iter().flat_map(|&b| b.max(order)..b + order).collect()
        } else {
            Vec::new()
        };
        build_design_excluding(&self.series, order, &exclude)
    }
}

/// Shared state of one selection run.
struct Ctx<'a> {
    order: usize,
    path: &'a RegPath,
    /// Row count of the full-data design, the reference for penalty scaling.
    n_ref: usize,
    config: &'a SelectionConfig,
    solver: &'a SolverConfig,
}

impl Ctx<'_> {
    fn penalty(&self, i: usize, design: &DesignPair) -> Penalty {
        let scale = design.n_rows() as f64 / self.n_ref as f64;
        let p = self.path.penalty(i);
        p.at(p.lambda * scale)
    }

    /// Warm-started penalized fits for the first `upto` path values.
    fn penalized_path(&self, design: &DesignPair, upto: usize) -> Vec<Result<FitResult>> {
        let mut out = Vec::with_capacity(upto);
        let mut warm: Option<GvarParams> = None;
        for i in 0..upto {
            let fit = fit_design(design, &self.penalty(i, design), self.solver, warm.as_ref());
            if let Ok(f) = &fit {
                warm = Some(f.params.clone());
            }
            out.push(fit);
        }
        out
    }

    /// Support at each of the first `upto` path values, aggregated over
    /// `j_inner` resamples of `data` (`j_inner = 1` uses `data` itself).
    fn support_path(&self, data: &Segmented, j_inner: usize, upto: usize) -> Result<Vec<Option<SupportSet>>> {
        let drop = self.config.drop_transition;
        let per_resample: Vec<Vec<Option<SupportSet>>> = if j_inner == 1 {
            let design = data.design(self.order, drop)?;
            vec![supports_of(self.penalized_path(&design, upto))]
        } else {
            let plan = data.plan(j_inner, self.order, drop)?;
            (0..j_inner)
                .into_par_iter()
                .map(|i| {
                    let design = data.resample(&plan, i)?.train_design()?;
                    Ok(supports_of(self.penalized_path(&design, upto)))
                })
                .collect::<Result<_>>()?
        };
        (0..upto)
            .map(|i| {
                let ok: Vec<SupportSet> = per_resample.iter().filter_map(|s| s[i].clone()).collect();
                if ok.is_empty() {
                    Ok(None)
                } else {
                    aggregate_supports(&ok, self.config.pi).map(Some)
                }
            })
            .collect()
    }

    /// Estimated supports and held-out errors along the path for one partition.
    fn trace(&self, resample: &Resample, j_inner: usize) -> Result<Trace> {
        let n = self.path.len();
        let train = resample.train_design()?;
        let test = resample.test_design()?;
        let supports = self.support_path(&Segmented::from_train(resample), j_inner, n)?;
        let mut cache: std::collections::HashMap<SupportSet, f64> = Default::default();
        let mut errors = Vec::with_capacity(n);
        for s in &supports {
            let e = match s {
                None => f64::INFINITY,
                Some(s) => match cache.get(s) {
                    Some(&e) => e,
                    None => {
                        let e = match refit_design(&train, s, self.solver) {
                            Ok(fit) => error_metric(&test, &fit.params)?,
                            Err(_) => f64::INFINITY,
                        };
                        cache.insert(s.clone(), e);
                        e
                    }
                },
            };
            errors.push(e);
        }
        Ok(Trace { supports, errors })
    }

    fn traces(&self, data: &Segmented, j_inner: usize) -> Result<Vec<Trace>> {
        let plan = data.plan(self.config.j_outer, self.order, self.config.drop_transition)?;
        (0..self.config.j_outer)
            .into_par_iter()
            .map(|j| self.trace(&data.resample(&plan, j)?, j_inner))
            .collect()
    }

    /// Per-partition optimal supports `Ŝ*_j`; partitions where every fit
    /// failed are skipped.
    fn optimal_supports(&self, traces: &[Trace]) -> (Vec<f64>, Vec<SupportSet>) {
        traces
            .iter()
            .filter_map(|t| {
                let i = argmin(&t.errors)?;
                Some((self.path.lambdas()[i], t.supports[i].clone()?))
            })
            .unzip()
    }
}

struct Trace {
    supports: Vec<Option<SupportSet>>,
    errors: Vec<f64>,
}

fn supports_of(fits: Vec<Result<FitResult>>) -> Vec<Option<SupportSet>> {
    fits.into_iter().map(|f| f.ok().map(|f| f.support)).collect()
}

/// Index of the smallest finite value, the earliest among ties. Paths run
/// from large to small `λ`, so ties go to the sparser model.
fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_finite() && best.is_none_or(|b| v < values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Mean of the finite cells of each column; `+∞` for columns with none.
fn column_means(rows: &[Vec<f64>], width: usize) -> Vec<f64> {
    (0..width)
        .map(|i| {
            let finite: Vec<f64> = rows.iter().map(|r| r[i]).filter(|v| v.is_finite()).collect();
            if finite.is_empty() {
                f64::INFINITY
            } else {
                finite.iter().sum::<f64>() / finite.len() as f64
            }
        })
        .collect()
}

fn check_inputs(series: &CountSeries, order: usize, config: &SelectionConfig) -> Result<usize> {
    config.validate()?;
    Ok(build_design(series, order)?.n_rows())
}

fn refit_full(data: &Segmented, order: usize, support: &SupportSet, ctx: &Ctx) -> Result<GvarParams> {
    let design = data.design(order, ctx.config.drop_transition)?;
    Ok(refit_design(&design, support, ctx.solver)?.params)
}

/// LASSO with `λ` chosen by held-out deviance of the penalized estimate.
/// Returns the penalized full-data fit at that `λ`, without refitting.
pub fn naive_lasso(
    series: &CountSeries,
    order: usize,
    path: &RegPath,
    config: &SelectionConfig,
    solver: &SolverConfig,
) -> Result<MethodResult> {
    let n_ref = check_inputs(series, order, config)?;
    let ctx = Ctx {
        order,
        path,
        n_ref,
        config,
        solver,
    };
    let data = Segmented::whole(series);
    let errors: Vec<Vec<f64>> = if path.len() == 1 {
        vec![vec![0.0]]
    } else {
        let plan = data.plan(config.j_outer.max(2), order, config.drop_transition)?;
        (0..plan.n_blocks())
            .into_par_iter()
            .map(|j| {
                let r = data.resample(&plan, j)?;
                let (train, test) = (r.train_design()?, r.test_design()?);
                ctx.penalized_path(&train, path.len())
                    .into_iter()
                    .map(|f| match f {
                        Ok(f) => error_metric(&test, &f.params),
                        Err(_) => Ok(f64::INFINITY),
                    })
                    .collect()
            })
            .collect::<Result<_>>()?
    };
    let best = argmin(&column_means(&errors, path.len()))
        .ok_or_else(|| GvarError::Selection("every penalized fit failed".into()))?;
    let design = data.design(order, false)?;
    let fit = ctx
        .penalized_path(&design, best + 1)
        .pop()
        .expect("nonempty prefix")?;
    Ok(MethodResult {
        method: Method::Naive,
        support: fit.support,
        params: fit.params,
        lambdas: path.lambdas().to_vec(),
        chosen_lambdas: vec![path.lambdas()[best]],
        gamma: None,
        per_partition_errors: errors,
        partition_supports: Vec::new(),
    })
}

/// Selection by cross-validated refit error over the path: `λ*` minimizes
/// the mean held-out error of the refitted supports, and the result is the
/// refit on the full-data support at `λ*`. Supports are aggregated over
/// `config.j_inner` resamples; `j_inner = 1` is the plain LASSO benchmark.
pub fn cv_select(
    series: &CountSeries,
    order: usize,
    path: &RegPath,
    config: &SelectionConfig,
    solver: &SolverConfig,
) -> Result<MethodResult> {
    let n_ref = check_inputs(series, order, config)?;
    if config.j_outer < 2 {
        return Err(invalid!("cross-validation needs j_outer >= 2"));
    }
    let ctx = Ctx {
        order,
        path,
        n_ref,
        config,
        solver,
    };
    let data = Segmented::whole(series);
    let traces = ctx.traces(&data, config.j_inner)?;
    let errors: Vec<Vec<f64>> = traces.into_iter().map(|t| t.errors).collect();
    let best = argmin(&column_means(&errors, path.len()))
        .ok_or_else(|| GvarError::Selection("every partition fit failed at every penalty".into()))?;
    let support = ctx
        .support_path(&data, config.j_inner, best + 1)?
        .pop()
        .flatten()
        .ok_or_else(|| GvarError::Selection(format!("full-data fit failed at lambda {}", path.lambdas()[best])))?;
    let params = refit_full(&data, order, &support, &ctx)?;
    Ok(MethodResult {
        method: if config.j_inner == 1 { Method::Cv } else { Method::SupportAgg },
        support,
        params,
        lambdas: path.lambdas().to_vec(),
        chosen_lambdas: vec![path.lambdas()[best]],
        gamma: None,
        per_partition_errors: errors,
        partition_supports: Vec::new(),
    })
}

/// Aggregated support `Ŝ_agg` at a single `λ` (full-data scale): coordinates
/// selected on at least `π·J_inner` of the leave-one-block-out resamples.
/// With `j_inner = 1` this is the LASSO support of `series` itself.
pub fn support_agg(
    series: &CountSeries,
    order: usize,
    lambda: f64,
    config: &SelectionConfig,
    solver: &SolverConfig,
) -> Result<SupportSet> {
    let n_ref = check_inputs(series, order, config)?;
    let path = RegPath::new(vec![lambda], config.alpha)?;
    let ctx = Ctx {
        order,
        path: &path,
        n_ref,
        config,
        solver,
    };
    ctx.support_path(&Segmented::whole(series), config.j_inner, 1)?
        .pop()
        .flatten()
        .ok_or_else(|| GvarError::Selection("every inner fit failed".into()))
}

/// Model aggregation: each partition picks its own `λ*_j`, and the final
/// support keeps coordinates found in more than a fraction `γ` of the
/// per-partition optimal supports. `γ` comes from `config.gamma` or, when
/// unset, from [`select_gamma`]. Supports are aggregated over
/// `config.j_inner` inner resamples; `j_inner = 1` gives model aggregation
/// alone.
pub fn model_agg(
    series: &CountSeries,
    order: usize,
    path: &RegPath,
    config: &SelectionConfig,
    solver: &SolverConfig,
) -> Result<MethodResult> {
    match config.gamma {
        Some(g) => model_agg_at(series, order, path, config, solver, g),
        None => select_gamma(series, order, path, config, solver).map(|(_, r)| r),
    }
}

fn model_agg_at(
    series: &CountSeries,
    order: usize,
    path: &RegPath,
    config: &SelectionConfig,
    solver: &SolverConfig,
    gamma: f64,
) -> Result<MethodResult> {
    let n_ref = check_inputs(series, order, config)?;
    let ctx = Ctx {
        order,
        path,
        n_ref,
        config,
        solver,
    };
    let data = Segmented::whole(series);
    let traces = if config.j_outer == 1 {
        let supports = ctx.support_path(&data, config.j_inner, path.len())?;
        let design = data.design(order, config.drop_transition)?;
        let errors = supports
            .iter()
            .map(|s| match s {
                Some(s) => match refit_design(&design, s, solver) {
                    Ok(f) => error_metric(&design, &f.params),
                    Err(_) => Ok(f64::INFINITY),
                },
                None => Ok(f64::INFINITY),
            })
            .collect::<Result<_>>()?;
        vec![Trace { supports, errors }]
    } else {
        ctx.traces(&data, config.j_inner)?
    };
    let (chosen, partition_supports) = ctx.optimal_supports(&traces);
    let support = frequency_filter(&partition_supports, gamma)?;
    let params = refit_full(&data, order, &support, &ctx)?;
    Ok(MethodResult {
        method: if config.j_inner == 1 { Method::ModelAgg } else { Method::Combined },
        support,
        params,
        lambdas: path.lambdas().to_vec(),
        chosen_lambdas: chosen,
        gamma: Some(gamma),
        per_partition_errors: traces.into_iter().map(|t| t.errors).collect(),
        partition_supports,
    })
}

/// Chooses `γ` by blocked cross-validation of the whole model-aggregation
/// procedure: for each of `gamma_folds` folds, the per-partition supports are
/// computed on the fold's training part, each candidate `γ` is turned into a
/// support and refitted there, and the refit is scored on the held-out fold.
/// The candidate with the lowest mean error wins, the smaller `γ` on ties.
/// Returns it with the full-data result at that `γ`.
pub fn select_gamma(
    series: &CountSeries,
    order: usize,
    path: &RegPath,
    config: &SelectionConfig,
    solver: &SolverConfig,
) -> Result<(f64, MethodResult)> {
    let n_ref = check_inputs(series, order, config)?;
    let grid = config.gamma_candidates();
    let gamma = if grid.len() == 1 {
        grid[0]
    } else {
        if config.gamma_folds < 2 {
            return Err(invalid!("gamma_folds must be at least 2"));
        }
        let ctx = Ctx {
            order,
            path,
            n_ref,
            config,
            solver,
        };
        let data = Segmented::whole(series);
        let plan = data.plan(config.gamma_folds, order, config.drop_transition)?;
        let rows: Vec<Vec<f64>> = (0..config.gamma_folds)
            .into_par_iter()
            .map(|f| {
                let fold = data.resample(&plan, f)?;
                let train = Segmented::from_train(&fold);
                let (train_design, test_design) = (fold.train_design()?, fold.test_design()?);
                let traces = ctx.traces(&train, config.j_inner)?;
                let (_, supports) = ctx.optimal_supports(&traces);
                if supports.is_empty() {
                    return Ok(vec![f64::INFINITY; grid.len()]);
                }
                let mut cache: std::collections::HashMap<SupportSet, f64> = Default::default();
                grid.iter()
                    .map(|&g| {
                        let s = frequency_filter(&supports, g)?;
                        if let Some(&e) = cache.get(&s) {
                            return Ok(e);
                        }
                        let e = match refit_design(&train_design, &s, solver) {
                            Ok(fit) => error_metric(&test_design, &fit.params)?,
                            Err(_) => f64::INFINITY,
                        };
                        cache.insert(s, e);
                        Ok(e)
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let best = argmin(&column_means(&rows, grid.len()))
            .ok_or_else(|| GvarError::Selection("every gamma candidate failed in every fold".into()))?;
        grid[best]
    };
    let result = model_agg_at(series, order, path, config, solver, gamma)?;
    Ok((gamma, result))
}

/// Runs `method` on `series` over the path `path`.
pub fn run_method(
    method: Method,
    series: &CountSeries,
    order: usize,
    path: &RegPath,
    config: &SelectionConfig,
    solver: &SolverConfig,
) -> Result<MethodResult> {
    let single = SelectionConfig {
        j_inner: 1,
        ..config.clone()
    };
    let mut result = match method {
        Method::Naive => naive_lasso(series, order, path, config, solver)?,
        Method::Cv => cv_select(series, order, path, &single, solver)?,
        Method::SupportAgg => cv_select(series, order, path, config, solver)?,
        Method::ModelAgg => model_agg(series, order, path, &single, solver)?,
        Method::Combined => model_agg(series, order, path, config, solver)?,
    };
    result.method = method;
    Ok(result)
}

/// [`run_method`] on the path given by [`resolve_path`].
pub fn select(method: Method, series: &CountSeries, order: usize, config: &SelectionConfig, solver: &SolverConfig) -> Result<MethodResult> {
    let path = resolve_path(series, order, config, solver)?;
    run_method(method, series, order, &path, config, solver)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LagCoord;
    use crate::simulation::{simulate, SimConfig};
    use ndarray::array;

    fn set(ids: &[usize]) -> SupportSet {
        SupportSet::from_coords(2, 1, ids.iter().map(|&i| LagCoord::new(0, i / 2, i % 2))).unwrap()
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(m.as_str().replace('_', "-").parse::<Method>().unwrap(), m);
        }
        assert!("lasso".parse::<Method>().is_err());
    }

    #[test]
    fn aggregation_thresholds() {
        let sets = [set(&[1, 3]), set(&[1]), set(&[1, 3])];
        assert_eq!(aggregate_supports(&sets, 1.0).unwrap(), set(&[1]));
        assert_eq!(aggregate_supports(&sets, 0.6).unwrap(), set(&[1, 3]));
        assert_eq!(aggregate_supports(&sets[..1], 0.3).unwrap(), sets[0]);
        assert!(aggregate_supports(&[], 0.5).is_err());
    }

    #[test]
    fn frequency_threshold_is_strict() {
        let with = |k: usize| -> Vec<SupportSet> { (0..10).map(|i| if i < k { set(&[2]) } else { set(&[]) }).collect() };
        assert_eq!(frequency_filter(&with(7), 0.6).unwrap(), set(&[2]));
        assert_eq!(frequency_filter(&with(6), 0.6).unwrap(), set(&[]));
        assert_eq!(frequency_filter(&[set(&[0, 3])], 0.99).unwrap(), set(&[0, 3]));
    }

    #[test]
    fn gamma_grid_defaults() {
        assert_eq!(default_gamma_grid(10), vec![0.6, 0.7, 0.8, 0.9]);
        assert_eq!(default_gamma_grid(3), vec![2.0 / 3.0]);
        assert_eq!(default_gamma_grid(2), vec![0.5]);
    }

    #[test]
    fn argmin_prefers_earliest() {
        assert_eq!(argmin(&[3.0, 1.0, 1.0, 2.0]), Some(1));
        assert_eq!(argmin(&[f64::INFINITY, f64::INFINITY]), None);
        assert_eq!(argmin(&[f64::INFINITY, 5.0]), Some(1));
    }

    #[test]
    fn column_means_skip_failures() {
        let rows = vec![vec![1.0, f64::INFINITY], vec![3.0, f64::INFINITY]];
        assert_eq!(column_means(&rows, 2), vec![2.0, f64::INFINITY]);
        let rows = vec![vec![1.0, f64::INFINITY], vec![3.0, 4.0]];
        assert_eq!(column_means(&rows, 2), vec![2.0, 4.0]);
    }

    fn truth() -> GvarParams {
        GvarParams::new(array![1.0, 1.0, 1.0], vec![array![[0.0, 0.0, 0.0], [-0.8, 0.0, 0.0], [0.0, 0.0, 0.0]]]).unwrap()
    }

    fn data(seed: u64) -> CountSeries {
        simulate(
            &truth(),
            &SimConfig {
                length: 600,
                seed,
                ..Default::default()
            },
        )
        .unwrap()
    }

    fn small() -> SelectionConfig {
        SelectionConfig {
            n_lambda: 12,
            pilot_points: 8,
            j_outer: 4,
            j_inner: 3,
            ..Default::default()
        }
    }

    #[test]
    fn error_metric_prefers_truth() {
        let x = data(1);
        let d = build_design(&x, 1).unwrap();
        let mut off = truth();
        off.nu_mut()[0] += 3.0;
        let e_true = error_metric(&d, &truth()).unwrap();
        assert!(e_true.is_finite() && e_true >= 0.0);
        assert!(e_true <= error_metric(&d, &off).unwrap());
        let mut huge = truth();
        huge.nu_mut()[1] = 800.0;
        assert_eq!(error_metric(&d, &huge).unwrap(), f64::INFINITY);
    }

    #[test]
    fn single_lambda_path_is_forced() {
        let x = data(2);
        let cfg = small();
        let solver = SolverConfig::default();
        let top = crate::solver::lambda_max(&x, 1, 1.0).unwrap();
        let path = RegPath::new(vec![0.2 * top], 1.0).unwrap();
        let naive = naive_lasso(&x, 1, &path, &cfg, &solver).unwrap();
        assert_eq!(naive.chosen_lambdas, vec![0.2 * top]);
        let cv_cfg = SelectionConfig {
            j_outer: 2,
            j_inner: 1,
            ..cfg
        };
        let cv = cv_select(&x, 1, &path, &cv_cfg, &solver).unwrap();
        let direct = crate::solver::lasso_gvar(&x, 1, &path.penalty(0), &solver, None).unwrap();
        assert_eq!(cv.support, direct.support);
    }

    #[test]
    fn methods_recover_a_strong_edge() {
        let x = data(3);
        let cfg = SelectionConfig {
            gamma: Some(0.5),
            ..small()
        };
        let solver = SolverConfig::default();
        let want = truth().support();
        for m in Method::ALL {
            let r = select(m, &x, 1, &cfg, &solver).unwrap();
            assert!(r.params.support().is_subset(&r.support));
            if m != Method::Naive {
                assert!(want.is_subset(&r.support), "{m} missed the edge: {:?}", r.support);
            }
        }
    }

    #[test]
    fn model_agg_with_tiny_gamma_unions_cv_partition_optima() {
        let x = data(4);
        let solver = SolverConfig::default();
        let cfg = SelectionConfig {
            j_inner: 1,
            gamma: Some(1e-9),
            ..small()
        };
        let path = resolve_path(&x, 1, &cfg, &solver).unwrap();
        let cv = cv_select(&x, 1, &path, &cfg, &solver).unwrap();
        let agg = model_agg(&x, 1, &path, &cfg, &solver).unwrap();
        assert_eq!(cv.per_partition_errors, agg.per_partition_errors);
        // trace by hand: each partition's argmin support, unioned
        let mut union = SupportSet::empty(3, 1);
        for ((row, s), &lam) in cv.per_partition_errors.iter().zip(&agg.partition_supports).zip(&agg.chosen_lambdas) {
            assert_eq!(lam, path.lambdas()[argmin(row).unwrap()]);
            union = union.union(s);
        }
        assert_eq!(agg.support, union);
    }

    #[test]
    fn gamma_selection_picks_from_grid() {
        let x = data(5);
        let solver = SolverConfig::default();
        let cfg = SelectionConfig {
            gamma_grid: Some(vec![0.5, 0.75]),
            ..small()
        };
        let path = resolve_path(&x, 1, &cfg, &solver).unwrap();
        let (g, r) = select_gamma(&x, 1, &path, &cfg, &solver).unwrap();
        assert!(g == 0.5 || g == 0.75);
        assert_eq!(r.gamma, Some(g));
        let one = SelectionConfig {
            gamma_grid: Some(vec![0.7]),
            ..small()
        };
        assert_eq!(select_gamma(&x, 1, &path, &one, &solver).unwrap().0, 0.7);
    }

    #[test]
    fn pipeline_is_deterministic() {
        let x = data(6);
        let solver = SolverConfig::default();
        let cfg = small();
        let a = select(Method::Combined, &x, 1, &cfg, &solver).unwrap();
        let b = select(Method::Combined, &x, 1, &cfg, &solver).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn support_agg_single_resample_is_lasso_support() {
        let x = data(7);
        let solver = SolverConfig::default();
        let cfg = SelectionConfig { j_inner: 1, ..small() };
        let top = crate::solver::lambda_max(&x, 1, 1.0).unwrap();
        let s = support_agg(&x, 1, 0.1 * top, &cfg, &solver).unwrap();
        let direct = crate::solver::lasso_gvar(&x, 1, &Penalty::new(0.1 * top, 1.0).unwrap(), &solver, None).unwrap();
        assert_eq!(s, direct.support);
    }
}
