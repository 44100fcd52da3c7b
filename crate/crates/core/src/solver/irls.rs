use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};

use super::enet::{subgradient_norm, GramProblem};
use super::{FitResult, Penalty, SolverConfig};
use crate::error::{invalid, GvarError, Result};
use crate::model::{build_design, checked_exp, CountSeries, DesignPair, GvarParams, LagCoord, SupportSet};

/// Halvings tried before an IRLS step is accepted despite increasing the objective.
const MAX_HALVINGS: usize = 10;
/// Consecutive objective increases treated as divergence.
const MAX_INCREASES: usize = 3;

#[derive(Clone, Copy, PartialEq, Eq)]
enum StepRule {
    /// Penalized quadratic model solved by coordinate descent.
    CoordinateDescent,
    /// Unpenalized Newton step from a Cholesky solve.
    Newton,
}

struct ColumnFit {
    coef: Array1<f64>,
    objective: f64,
    sweeps: usize,
    outer: usize,
    converged: bool,
}

/// One column `m` of the pseudo-regression: a Poisson regression of `Y[·,m]`
/// on the columns of `U` listed in `active` (zero-based; 0 is the intercept).
struct ColumnProblem<'a> {
    design: &'a DesignPair,
    /// `U'` in standard layout, so each design column is a contiguous row.
    ut: &'a Array2<f64>,
    m: usize,
    active: Vec<usize>,
    penalized: Vec<bool>,
}

impl<'a> ColumnProblem<'a> {
    fn new(design: &'a DesignPair, ut: &'a Array2<f64>, m: usize, active: Vec<usize>) -> Self {
        let penalized = active.iter().map(|&p| p > 0).collect();
        Self {
            design,
            ut,
            m,
            active,
            penalized,
        }
    }

    fn col(&self, p: usize) -> &[f64] {
        self.ut.row(p).to_slice().expect("standard layout")
    }

    fn eta(&self, b: &Array1<f64>) -> Array1<f64> {
        let mut eta = Array1::zeros(self.ut.ncols());
        let out = eta.as_slice_mut().expect("contiguous");
        for (&p, &v) in self.active.iter().zip(b.iter()) {
            if v != 0.0 {
                for (e, x) in out.iter_mut().zip(self.col(p)) {
                    *e += v * x;
                }
            }
        }
        eta
    }

    fn mean(&self, eta: &Array1<f64>) -> Result<Array1<f64>> {
        let times = self.design.target_times();
        let mut mu = Array1::zeros(eta.len());
        for (n, (&e, out)) in eta.iter().zip(mu.iter_mut()).enumerate() {
            *out = checked_exp(e, times[n], self.m)?;
        }
        Ok(mu)
    }

    /// Penalized negative log-likelihood, returned with the means it used.
    fn objective(&self, eta: &Array1<f64>, b: &Array1<f64>, penalty: &Penalty) -> Result<(f64, Array1<f64>)> {
        let y = self.design.y().column(self.m);
        let mu = self.mean(eta)?;
        let nll: f64 = mu.iter().zip(y.iter()).zip(eta.iter()).map(|((mu, y), e)| mu - y * e).sum();
        let pen: f64 = b.iter().zip(&self.penalized).filter(|(_, &p)| p).map(|(&v, _)| penalty.value(v)).sum();
        Ok((nll + self.design.log_factorial_sum(self.m) + pen, mu))
    }

    /// Score `U_A'(y − μ)` over the active columns.
    fn score(&self, mu: &Array1<f64>) -> Array1<f64> {
        let y = self.design.y().column(self.m);
        let r: Vec<f64> = y.iter().zip(mu.iter()).map(|(y, mu)| y - mu).collect();
        self.active.iter().map(|&p| dot(&r, self.col(p))).collect()
    }

    /// Weighted Gram `U_W' diag(μ) U_W` over the active positions `work`.
    fn gram(&self, mu: &Array1<f64>, work: &[usize]) -> Array2<f64> {
        let mu = mu.as_slice().expect("contiguous");
        let k = work.len();
        let mut gram = Array2::zeros((k, k));
        let mut weighted = vec![0.0; mu.len()];
        for a in 0..k {
            for ((w, x), m) in weighted.iter_mut().zip(self.col(self.active[work[a]])).zip(mu) {
                *w = x * m;
            }
            for b in a..k {
                let v = dot(&weighted, self.col(self.active[work[b]]));
                gram[[a, b]] = v;
                gram[[b, a]] = v;
            }
        }
        gram
    }

    fn fit(&self, init: &Array1<f64>, penalty: &Penalty, config: &SolverConfig, tol: f64, rule: StepRule) -> Result<ColumnFit> {
        let mut b: Array1<f64> = self.active.iter().map(|&p| init[p]).collect();
        let (mut obj, mut mu) = self.objective(&self.eta(&b), &b, penalty)?;
        let mut sweeps = 0;
        let mut increases = 0;
        let mut converged = false;
        let mut outer = 0;
        loop {
            let score = self.score(&mu);
            if subgradient_norm(b.view(), score.view(), &self.penalized, penalty) <= tol {
                converged = true;
                break;
            }
            if outer >= config.max_outer_iters {
                break;
            }
            outer += 1;
            let target = match rule {
                StepRule::Newton => {
                    let all: Vec<usize> = (0..b.len()).collect();
                    newton_target(&b, &score, &self.gram(&mu, &all))
                }
                StepRule::CoordinateDescent => None,
            };
            let target = match target {
                Some(t) => t,
                None => {
                    // Zero coordinates that satisfy their optimality condition
                    // stay at zero; the next score check catches any that
                    // start violating it.
                    let work: Vec<usize> = (0..b.len())
                        .filter(|&a| !self.penalized[a] || b[a] != 0.0 || score[a].abs() > penalty.l1())
                        .collect();
                    let gram = self.gram(&mu, &work);
                    let penalized: Vec<bool> = work.iter().map(|&a| self.penalized[a]).collect();
                    let mut sub: Array1<f64> = work.iter().map(|&a| b[a]).collect();
                    let mut resid: Array1<f64> = work.iter().map(|&a| score[a]).collect();
                    let problem = GramProblem {
                        gram: &gram,
                        penalized: &penalized,
                    };
                    let (sw, _) = problem.solve(&mut sub, &mut resid, penalty, 0.1 * tol, config.max_inner_sweeps);
                    sweeps += sw;
                    let mut next = b.clone();
                    for (&a, &v) in work.iter().zip(sub.iter()) {
                        next[a] = v;
                    }
                    next
                }
            };
            let direction = &target - &b;
            let scale = 1.0 + b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if direction.iter().all(|d| d.abs() <= 1e-13 * scale) {
                // the quadratic model cannot improve on the current point
                converged = true;
                break;
            }
            let threshold = obj + 1e-13 * obj.abs().max(1.0);
            let mut step = 1.0;
            let mut accepted = None;
            let mut last = None;
            for _ in 0..=MAX_HALVINGS {
                let cand = &b + &(&direction * step);
                if let Ok((cand_obj, cand_mu)) = self.objective(&self.eta(&cand), &cand, penalty) {
                    if cand_obj <= threshold {
                        accepted = Some((cand, cand_obj, cand_mu));
                        break;
                    }
                    last = Some((cand, cand_obj, cand_mu));
                }
                step *= 0.5;
            }
            match accepted {
                Some((cand, cand_obj, cand_mu)) => {
                    increases = 0;
                    b = cand;
                    obj = cand_obj;
                    mu = cand_mu;
                }
                None => {
                    increases += 1;
                    if increases >= MAX_INCREASES {
                        return Err(GvarError::Diverged { consecutive: increases });
                    }
                    let (cand, cand_obj, cand_mu) = match last {
                        Some(l) => l,
                        None => {
                            let t = self.design.target_times()[0];
                            return Err(GvarError::NumericOverflow { t, component: self.m });
                        }
                    };
                    b = cand;
                    obj = cand_obj;
                    mu = cand_mu;
                }
            }
        }
        let mut coef = Array1::zeros(self.design.n_coef());
        for (&p, &v) in self.active.iter().zip(b.iter()) {
            coef[p] = v;
        }
        Ok(ColumnFit {
            coef,
            objective: obj,
            sweeps,
            outer,
            converged,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn newton_target(b: &Array1<f64>, score: &Array1<f64>, gram: &Array2<f64>) -> Option<Array1<f64>> {
    let k = b.len();
    let h = DMatrix::from_fn(k, k, |i, j| gram[[i, j]]);
    let chol = h.cholesky()?;
    let step = chol.solve(&DVector::from_iterator(k, score.iter().copied()));
    if step.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(Array1::from_shape_fn(k, |i| b[i] + step[i]))
}

/// Intercepts at the log of the column means of `Y`, lag coefficients zero.
fn cold_start(design: &DesignPair) -> Result<GvarParams> {
    let mut params = GvarParams::zeros(design.dim(), design.order());
    for (m, col) in design.y().columns().into_iter().enumerate() {
        let mean = col.mean().unwrap_or(0.0);
        if mean <= 0.0 {
            return Err(GvarError::DegenerateData(format!(
                "component {} is identically zero over the design rows",
                m + 1
            )));
        }
        params.nu_mut()[m] = mean.ln();
    }
    Ok(params)
}

fn fit_columns(
    design: &DesignPair,
    penalty: &Penalty,
    config: &SolverConfig,
    init: &GvarParams,
    support: Option<&SupportSet>,
    rule: StepRule,
) -> Result<FitResult> {
    config.validate()?;
    design.check_params(init)?;
    let dim = design.dim();
    let tol = config.grad_tol / (dim as f64).sqrt();
    let ut = design.u().t().as_standard_layout().into_owned();
    let mut params = GvarParams::zeros(dim, design.order());
    let (mut objective, mut sweeps, mut outer, mut converged) = (0.0, 0, 0, true);
    for m in 0..dim {
        let active: Vec<usize> = (0..design.n_coef())
            .filter(|&p| {
                p == 0
                    || support.is_none_or(|s| {
                        let (d, j) = ((p - 1) / dim, (p - 1) % dim);
                        s.contains(&LagCoord::new(d, m, j))
                    })
            })
            .collect();
        let problem = ColumnProblem::new(design, &ut, m, active);
        let fit = problem.fit(&init.coef_column(m), penalty, config, tol, rule)?;
        params.set_coef_column(m, fit.coef.view());
        objective += fit.objective;
        sweeps += fit.sweeps;
        outer = outer.max(fit.outer);
        converged &= fit.converged;
    }
    let support = params.support();
    Ok(FitResult {
        params,
        support,
        objective,
        n_sweeps: sweeps,
        outer_iters: outer,
        converged,
    })
}

/// Penalized IRLS fit on a prepared design. Without a warm start the fit
/// begins from [`cold_start`] values.
pub fn fit_design(
    design: &DesignPair,
    penalty: &Penalty,
    config: &SolverConfig,
    warm_start: Option<&GvarParams>,
) -> Result<FitResult> {
    let init = match warm_start {
        Some(p) => p.clone(),
        None => cold_start(design)?,
    };
    fit_columns(design, penalty, config, &init, None, StepRule::CoordinateDescent)
}

/// Elastic-net penalized Poisson GVAR(`order`) estimate of `series`.
pub fn lasso_gvar(
    series: &CountSeries,
    order: usize,
    penalty: &Penalty,
    config: &SolverConfig,
    warm_start: Option<&GvarParams>,
) -> Result<FitResult> {
    let design = build_design(series, order)?;
    fit_design(&design, penalty, config, warm_start)
}

/// Unpenalized maximum likelihood over the intercepts and the lag
/// coordinates in `support`; every other coordinate is exactly zero.
pub fn refit_design(design: &DesignPair, support: &SupportSet, config: &SolverConfig) -> Result<FitResult> {
    if support.dim() != design.dim() || support.order() != design.order() {
        return Err(invalid!("support does not match the design dimensions"));
    }
    let init = cold_start(design)?;
    fit_columns(design, &Penalty::none(), config, &init, Some(support), StepRule::Newton)
}

pub fn refit_mle(series: &CountSeries, order: usize, support: &SupportSet, config: &SolverConfig) -> Result<FitResult> {
    let design = build_design(series, order)?;
    refit_design(&design, support, config)
}

/// Largest violation of the elastic-net optimality conditions at `params`:
/// `|g_j| ≤ λα` for zero penalized coordinates, `g_j = λ(1−α)β_j + λα·sign(β_j)`
/// (plus ridge) for nonzero ones, and `g_j = 0` for intercepts, where `g` is
/// the log-likelihood score. Coordinates outside `support` (when given) are
/// ignored.
pub fn kkt_residual(design: &DesignPair, params: &GvarParams, penalty: &Penalty, support: Option<&SupportSet>) -> Result<f64> {
    let score = design.score(params)?;
    let dim = design.dim();
    let mut worst = 0.0f64;
    for m in 0..dim {
        for p in 0..design.n_coef() {
            let g = score[[p, m]];
            let v = if p == 0 {
                g.abs()
            } else {
                let c = LagCoord::new((p - 1) / dim, m, (p - 1) % dim);
                if support.is_some_and(|s| !s.contains(&c)) {
                    continue;
                }
                let b = params.get(c);
                if b == 0.0 {
                    (g.abs() - penalty.l1()).max(0.0)
                } else {
                    (g - penalty.l2() * b - penalty.l1() * b.signum()).abs()
                }
            };
            worst = worst.max(v);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::log_likelihood;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};

    /// Simulates a stable GVAR(1) without going through the simulation module.
    fn simulate(params: &GvarParams, len: usize, seed: u64) -> CountSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = params.dim();
        let mut rows = vec![vec![0u64; dim]];
        for t in 1..len {
            let prev: Vec<f64> = rows[t - 1].iter().map(|&v| v as f64).collect();
            let theta = params.conditional_log_mean(&[&prev]).unwrap();
            rows.push(theta.iter().map(|th| Poisson::new(th.exp()).unwrap().sample(&mut rng) as u64).collect());
        }
        CountSeries::from_rows(&rows).unwrap()
    }

    fn two_dim() -> GvarParams {
        GvarParams::new(array![1.0, 0.5], vec![array![[-0.2, 0.15], [0.0, -0.3]]]).unwrap()
    }

    #[test]
    fn huge_lambda_gives_intercept_only() {
        let s = simulate(&two_dim(), 300, 1);
        let p = Penalty::new(1e9, 1.0).unwrap();
        let fit = lasso_gvar(&s, 1, &p, &SolverConfig::default(), None).unwrap();
        assert!(fit.support.is_empty());
        assert!(fit.converged);
        let d = build_design(&s, 1).unwrap();
        for m in 0..2 {
            let mean = d.y().column(m).mean().unwrap();
            assert!((fit.params.nu()[m] - mean.ln()).abs() < 1e-8);
        }
    }

    #[test]
    fn empty_support_refit_is_log_mean() {
        let s = simulate(&two_dim(), 200, 2);
        let fit = refit_mle(&s, 1, &SupportSet::empty(2, 1), &SolverConfig::default()).unwrap();
        let d = build_design(&s, 1).unwrap();
        for m in 0..2 {
            assert!((fit.params.nu()[m] - d.y().column(m).mean().unwrap().ln()).abs() < 1e-10);
        }
        assert!(fit.support.is_empty());
    }

    #[test]
    fn scalar_refit_matches_newton_oracle() {
        let truth = GvarParams::new(array![1.2], vec![array![[-0.25]]]).unwrap();
        let s = simulate(&truth, 150, 3);
        let fit = refit_mle(&s, 1, &SupportSet::full(1, 1), &SolverConfig::default()).unwrap();
        // plain 2x2 Newton on (ν, a) with explicit inverse
        let (mut nu, mut a) = (0.0f64, 0.0f64);
        for _ in 0..100 {
            let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for t in 1..s.len() {
                let x = s.get(t - 1, 0) as f64;
                let y = s.get(t, 0) as f64;
                let mu = (nu + a * x).exp();
                g0 += y - mu;
                g1 += (y - mu) * x;
                h00 += mu;
                h01 += mu * x;
                h11 += mu * x * x;
            }
            let det = h00 * h11 - h01 * h01;
            nu += (h11 * g0 - h01 * g1) / det;
            a += (h00 * g1 - h01 * g0) / det;
        }
        assert!((fit.params.nu()[0] - nu).abs() < 1e-6);
        assert!((fit.params.lag(0)[[0, 0]] - a).abs() < 1e-6);
    }

    #[test]
    fn lasso_at_zero_matches_refit() {
        let s = simulate(&two_dim(), 500, 4);
        let cfg = SolverConfig::default();
        let lasso = lasso_gvar(&s, 1, &Penalty::with_ridge(0.0, 1.0, 0.0).unwrap(), &cfg, None).unwrap();
        let refit = refit_mle(&s, 1, &SupportSet::full(2, 1), &cfg).unwrap();
        assert!(lasso.converged && refit.converged);
        for (a, b) in lasso.params.to_beta().iter().zip(refit.params.to_beta()) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn kkt_holds_at_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = simulate(&two_dim(), 400, 6);
        let d = build_design(&s, 1).unwrap();
        for _ in 0..5 {
            let lambda = rng.random_range(1.0..40.0);
            let alpha = rng.random_range(0.3..1.0);
            let pen = Penalty::new(lambda, alpha).unwrap();
            let fit = fit_design(&d, &pen, &SolverConfig::default(), None).unwrap();
            assert!(fit.converged);
            assert!(kkt_residual(&d, &fit.params, &pen, None).unwrap() <= 1e-5);
        }
    }

    #[test]
    fn refit_score_vanishes_on_support() {
        let s = simulate(&two_dim(), 300, 7);
        let d = build_design(&s, 1).unwrap();
        let support = SupportSet::from_coords(2, 1, [LagCoord::new(0, 0, 0), LagCoord::new(0, 1, 0)]).unwrap();
        let cfg = SolverConfig::default();
        let fit = refit_design(&d, &support, &cfg).unwrap();
        assert!(fit.support.is_subset(&support));
        assert!(kkt_residual(&d, &fit.params, &Penalty::none(), Some(&support)).unwrap() <= cfg.grad_tol);
        assert_eq!(fit.params.get(LagCoord::new(0, 0, 1)), 0.0);
    }

    #[test]
    fn objective_is_penalized_nll() {
        let s = simulate(&two_dim(), 200, 8);
        let pen = Penalty::with_ridge(5.0, 0.5, 0.0).unwrap();
        let fit = lasso_gvar(&s, 1, &pen, &SolverConfig::default(), None).unwrap();
        let ll = log_likelihood(&fit.params, &s).unwrap();
        let penalty: f64 = fit.params.lag(0).iter().map(|&b| pen.value(b)).sum();
        assert!((fit.objective - (-ll + penalty)).abs() < 1e-8 * fit.objective.abs());
    }

    #[test]
    fn all_zero_component_is_degenerate() {
        let s = CountSeries::from_rows(&vec![vec![3, 0]; 20]).unwrap();
        let err = lasso_gvar(&s, 1, &Penalty::new(1.0, 1.0).unwrap(), &SolverConfig::default(), None).unwrap_err();
        assert!(matches!(err, GvarError::DegenerateData(_)));
    }

    #[test]
    fn warm_start_matches_cold_start() {
        let s = simulate(&two_dim(), 300, 9);
        let d = build_design(&s, 1).unwrap();
        let cfg = SolverConfig::default();
        let pen = Penalty::new(8.0, 1.0).unwrap();
        let cold = fit_design(&d, &pen, &cfg, None).unwrap();
        let other = fit_design(&d, &pen.at(20.0), &cfg, None).unwrap();
        let warm = fit_design(&d, &pen, &cfg, Some(&other.params)).unwrap();
        assert_eq!(cold.support, warm.support);
        for (a, b) in cold.params.to_beta().iter().zip(warm.params.to_beta()) {
            assert!((a - b).abs() < 1e-4);
        }
    }
}
