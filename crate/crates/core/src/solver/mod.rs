//! Elastic-net penalized Poisson GVAR estimation.
//!
//! The layers mirror the usual glmnet construction:
//!
//! * [`enet_wls`]: cyclic coordinate descent for weighted least squares with
//!   an elastic-net penalty, using the soft-threshold update
//!   `β_j ← S((z − z⁽ʲ⁾)'W x_j, λα) / (x_j'W x_j + λ(1 − α))`.
//! * [`lasso_gvar`]: penalized IRLS. The pseudo-regression `η = U B` splits
//!   into one Poisson regression per column of `B`; each column is fitted by
//!   repeatedly forming the working response `z = η + (y − μ)/μ` with weights
//!   `W = diag(μ)` and running coordinate descent on the quadratic model.
//!   Intercepts (row 0 of `B`) are never penalized.
//! * [`refit_mle`]: unpenalized Newton-IRLS restricted to a support set.
//!
//! `λ` multiplies the sum-form penalty directly; there is no `1/N` scaling,
//! so the same `λ` is stronger, relatively, on shorter series.

mod enet;
mod irls;
mod path;

pub use enet::{enet_wls, soft_threshold, wls_objective, WlsFit};
pub use irls::{fit_design, kkt_residual, lasso_gvar, refit_design, refit_mle};
pub use path::{
    default_path, fit_path, lambda_max, lambda_max_design, narrowed_path, path_design, RegPath,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{GvarParams, SupportSet};

/// Default stability ridge added to penalized coordinates of a pure LASSO fit.
pub const DEFAULT_RIDGE_EPS: f64 = 1e-6;

/// Elastic-net penalty `λ[(1 − α)/2 ‖a‖² + α‖a‖₁] + (ε/2)‖a‖²` on lag coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    pub lambda: f64,
    pub alpha: f64,
    pub ridge_eps: f64,
}

impl Penalty {
    /// Penalty with the default ridge: `1e-6` for `α = 1`, none otherwise.
    pub fn new(lambda: f64, alpha: f64) -> Result<Self> {
        let ridge_eps = if alpha == 1.0 { DEFAULT_RIDGE_EPS } else { 0.0 };
        Self::with_ridge(lambda, alpha, ridge_eps)
    }

    pub fn with_ridge(lambda: f64, alpha: f64, ridge_eps: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(invalid!("lambda must be finite and nonnegative, got {lambda}"));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(invalid!("alpha must lie in [0, 1], got {alpha}"));
        }
        if !(ridge_eps >= 0.0 && ridge_eps.is_finite()) {
            return Err(invalid!("ridge_eps must be finite and nonnegative, got {ridge_eps}"));
        }
        Ok(Self { lambda, alpha, ridge_eps })
    }

    /// No penalty at all.
    pub fn none() -> Self {
        Self {
            lambda: 0.0,
            alpha: 1.0,
            ridge_eps: 0.0,
        }
    }

    pub(crate) fn l1(&self) -> f64 {
        self.lambda * self.alpha
    }

    pub(crate) fn l2(&self) -> f64 {
        self.lambda * (1.0 - self.alpha) + self.ridge_eps
    }

    /// Value of the penalty for a single coordinate.
    pub(crate) fn value(&self, b: f64) -> f64 {
        self.l1() * b.abs() + 0.5 * self.l2() * b * b
    }

    /// Same penalty at a different `λ`.
    pub fn at(&self, lambda: f64) -> Self {
        Self { lambda, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Stopping threshold `δ` on the Euclidean norm of the (minimum-norm
    /// sub)gradient of the penalized objective.
    pub grad_tol: f64,
    pub max_outer_iters: usize,
    pub max_inner_sweeps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            max_outer_iters: 100,
            max_inner_sweeps: 1000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) || self.max_outer_iters == 0 || self.max_inner_sweeps == 0 {
            return Err(invalid!("solver config needs grad_tol > 0 and iteration caps >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: GvarParams,
    /// Lag coordinates with nonzero estimate.
    pub support: SupportSet,
    /// Penalized negative log-likelihood at the solution.
    pub objective: f64,
    /// Coordinate-descent sweeps summed over columns and IRLS iterations.
    pub n_sweeps: usize,
    pub outer_iters: usize,
    pub converged: bool,
}
