use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::{Penalty, SolverConfig};
use crate::error::{invalid, Result};

/// `S(x, y) = sign(x)·max(|x| − y, 0)`.
#[inline]
pub fn soft_threshold(x: f64, y: f64) -> f64 {
    debug_assert!(y >= 0.0);
    if x > y {
        x - y
    } else if x < -y {
        x + y
    } else {
        0.0
    }
}

/// Coordinate descent on `½ β'Gβ − c'β + penalty` over the coordinates listed
/// in `active`, expressed through the Gram matrix `G = X'WX`.
///
/// `resid` holds `X'W(z − Xβ)` for the current `β` on entry and is kept in
/// sync. For coordinate `j`, `resid[j] + G[j,j] β_j` is the partial-residual
/// inner product `(z − z⁽ʲ⁾)'W x_j`.
pub(crate) struct GramProblem<'a> {
    pub gram: &'a Array2<f64>,
    pub penalized: &'a [bool],
}

impl GramProblem<'_> {
    /// Runs sweeps until the penalized subgradient norm drops to `tol` or
    /// `max_sweeps` is reached. Returns `(sweeps, converged)`.
    pub fn solve(
        &self,
        beta: &mut Array1<f64>,
        resid: &mut Array1<f64>,
        penalty: &Penalty,
        tol: f64,
        max_sweeps: usize,
    ) -> (usize, bool) {
        let k = beta.len();
        let (l1, l2) = (penalty.l1(), penalty.l2());
        for sweep in 1..=max_sweeps {
            for j in 0..k {
                let gjj = self.gram[[j, j]];
                let partial = resid[j] + gjj * beta[j];
                let new = if self.penalized[j] {
                    let denom = gjj + l2;
                    if denom > 0.0 {
                        soft_threshold(partial, l1) / denom
                    } else {
                        0.0
                    }
                } else if gjj > 0.0 {
                    partial / gjj
                } else {
                    0.0
                };
                let delta = new - beta[j];
                if delta != 0.0 {
                    beta[j] = new;
                    for (r, g) in resid.iter_mut().zip(self.gram.column(j)) {
                        *r -= g * delta;
                    }
                }
            }
            if subgradient_norm(beta.view(), resid.view(), self.penalized, penalty) <= tol {
                return (sweep, true);
            }
        }
        (max_sweeps, false)
    }
}

/// Norm of the minimum-norm subgradient of `smooth + penalty`, where `neg_grad`
/// is the negative gradient of the smooth part.
pub(crate) fn subgradient_norm(beta: ArrayView1<f64>, neg_grad: ArrayView1<f64>, penalized: &[bool], penalty: &Penalty) -> f64 {
    let (l1, l2) = (penalty.l1(), penalty.l2());
    let mut acc = 0.0;
    for ((&b, &g), &pen) in beta.iter().zip(neg_grad.iter()).zip(penalized) {
        let v = if !pen {
            g
        } else if b == 0.0 {
            (g.abs() - l1).max(0.0)
        } else {
            -g + l2 * b + l1 * b.signum()
        };
        acc += v * v;
    }
    acc.sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WlsFit {
    pub beta: Array1<f64>,
    pub objective: f64,
    pub sweeps: usize,
    pub converged: bool,
}

/// `½(z − Xβ)'W(z − Xβ) + Σ_{j penalized} [λα|β_j| + ½(λ(1−α) + ε)β_j²]`.
pub fn wls_objective(
    z: ArrayView1<f64>,
    x: ArrayView2<f64>,
    w: ArrayView1<f64>,
    beta: ArrayView1<f64>,
    penalty: &Penalty,
    unpenalized: &[usize],
) -> f64 {
    let r = &z - &x.dot(&beta);
    let loss = 0.5 * r.iter().zip(w.iter()).map(|(r, w)| w * r * r).sum::<f64>();
    let pen: f64 = beta
        .iter()
        .enumerate()
        .filter(|(j, _)| !unpenalized.contains(j))
        .map(|(_, &b)| penalty.value(b))
        .sum();
    loss + pen
}

/// Elastic-net weighted least squares by cyclic coordinate descent, starting
/// from `β = 0`. Coordinates in `unpenalized` are updated without
/// thresholding or shrinkage. Stops when the subgradient norm is at most
/// `config.grad_tol` or after `config.max_inner_sweeps` sweeps; the result is
/// flagged `converged = false` in the latter case.
pub fn enet_wls(
    z: ArrayView1<f64>,
    x: ArrayView2<f64>,
    w: ArrayView1<f64>,
    penalty: &Penalty,
    config: &SolverConfig,
    unpenalized: &[usize],
) -> Result<WlsFit> {
    config.validate()?;
    let (n, k) = x.dim();
    if z.len() != n || w.len() != n {
        return Err(invalid!("z and W must have {n} entries"));
    }
    if w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(invalid!("weights must be positive and finite"));
    }
    if let Some(j) = unpenalized.iter().find(|&&j| j >= k) {
        return Err(invalid!("unpenalized coordinate {j} out of range"));
    }
    let mut gram = Array2::zeros((k, k));
    let mut resid = Array1::zeros(k);
    for i in 0..n {
        let row = x.row(i);
        for a in 0..k {
            let wa = w[i] * row[a];
            resid[a] += wa * z[i];
            for b in a..k {
                gram[[a, b]] += wa * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            gram[[a, b]] = gram[[b, a]];
        }
    }
    let penalized: Vec<bool> = (0..k).map(|j| !unpenalized.contains(&j)).collect();
    let mut beta = Array1::zeros(k);
    let problem = GramProblem {
        gram: &gram,
        penalized: &penalized,
    };
    let (sweeps, converged) = problem.solve(&mut beta, &mut resid, penalty, config.grad_tol, config.max_inner_sweeps);
    let objective = wls_objective(z, x, w, beta.view(), penalty, unpenalized);
    Ok(WlsFit {
        beta,
        objective,
        sweeps,
        converged,
    })
}
