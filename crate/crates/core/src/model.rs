//! Poisson GVAR(D) model: count series, parameters, the conditional
//! log-likelihood and deviance, and the pseudo-regression arrangement
//! `(Y, U, B)` that turns estimation into `M` independent Poisson regressions.
//!
//! A GVAR(D) process has conditional log-means
//!
//! ```text
//! θ_t = ν + A_1 x_{t-1} + ... + A_D x_{t-D}
//! ```
//!
//! and components that are conditionally independent Poisson variables given
//! the last `D` observations. Likelihoods here are always conditional on the
//! first `D` observations; the initial distribution is never modelled.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use statrs::function::factorial::ln_factorial;

use crate::error::{invalid, GvarError, Result};

/// Largest linear predictor for which `exp` is evaluated. Anything above is
/// reported as [`GvarError::NumericOverflow`] instead of producing infinity.
pub const EXP_LIMIT: f64 = 700.0;

pub(crate) fn checked_exp(eta: f64, t: usize, component: usize) -> Result<f64> {
    if eta > EXP_LIMIT || eta.is_nan() {
        return Err(GvarError::NumericOverflow { t, component });
    }
    Ok(eta.exp())
}

/// `T × M` matrix of nonnegative counts, one row per time step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountSeries {
    data: Array2<u64>,
}

impl CountSeries {
    pub fn new(data: Array2<u64>) -> Result<Self> {
        if data.ncols() == 0 {
            return Err(invalid!("count series needs at least one component"));
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if let Some((t, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(invalid!("row {t} has {} entries, expected {dim}", r.len()));
        }
        let flat: Vec<u64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((rows.len(), dim), flat)
            .map_err(|e| invalid!("bad series shape: {e}"))?;
        Self::new(data)
    }

    /// Univariate convenience constructor.
    pub fn univariate(values: &[u64]) -> Self {
        let data = Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("shape");
        Self { data }
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> ArrayView2<'_, u64> {
        self.data.view()
    }

    pub fn row(&self, t: usize) -> ArrayView1<'_, u64> {
        self.data.row(t)
    }

    pub fn get(&self, t: usize, m: usize) -> u64 {
        self.data[[t, m]]
    }

    pub fn slice(&self, range: Range<usize>) -> CountSeries {
        CountSeries {
            data: self.data.slice(ndarray::s![range, ..]).to_owned(),
        }
    }

    /// Concatenates series in the given order.
    pub fn concat(parts: &[CountSeries]) -> Result<CountSeries> {
        let first = parts.first().ok_or_else(|| invalid!("nothing to concatenate"))?;
        let views: Vec<_> = parts.iter().map(|p| p.data.view()).collect();
        if parts.iter().any(|p| p.dim() != first.dim()) {
            return Err(invalid!("cannot concatenate series of different dimension"));
        }
        let data = ndarray::concatenate(Axis(0), &views).map_err(|e| invalid!("{e}"))?;
        Ok(CountSeries { data })
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.data.mapv(|x| x as f64)
    }

    pub(crate) fn require_len(&self, order: usize) -> Result<()> {
        if order == 0 {
            return Err(invalid!("model order must be at least 1"));
        }
        if self.len() < order + 1 {
            return Err(invalid!(
                "series of length {} is too short for order {order} (need at least {})",
                self.len(),
                order + 1
            ));
        }
        Ok(())
    }
}

/// A coordinate of the lag matrices: entry `(row, col)` of `A_{lag+1}`.
/// All three indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LagCoord {
    pub lag: usize,
    pub row: usize,
    pub col: usize,
}

impl LagCoord {
    pub fn new(lag: usize, row: usize, col: usize) -> Self {
        Self { lag, row, col }
    }
}

impl fmt::Display for LagCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A{}[{},{}]", self.lag + 1, self.row + 1, self.col + 1)
    }
}

/// Set of lag coordinates estimated (or known) to be nonzero. Intercepts are
/// never members.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SupportSet {
    dim: usize,
    order: usize,
    coords: BTreeSet<LagCoord>,
}

impl SupportSet {
    pub fn empty(dim: usize, order: usize) -> Self {
        Self {
            dim,
            order,
            coords: BTreeSet::new(),
        }
    }

    /// Every lag coordinate.
    pub fn full(dim: usize, order: usize) -> Self {
        let coords = (0..order)
            .flat_map(|d| (0..dim).flat_map(move |i| (0..dim).map(move |j| LagCoord::new(d, i, j))))
            .collect();
        Self { dim, order, coords }
    }

    pub fn from_coords(dim: usize, order: usize, coords: impl IntoIterator<Item = LagCoord>) -> Result<Self> {
        let mut set = Self::empty(dim, order);
        for c in coords {
            set.insert(c)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, c: LagCoord) -> Result<bool> {
        if c.lag >= self.order || c.row >= self.dim || c.col >= self.dim {
            return Err(invalid!("coordinate {c} outside a {}-dimensional order-{} model", self.dim, self.order));
        }
        Ok(self.coords.insert(c))
    }

    pub fn contains(&self, c: &LagCoord) -> bool {
        self.coords.contains(c)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LagCoord> + '_ {
        self.coords.iter()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of lag coordinates, `D·M²`.
    pub fn ambient_size(&self) -> usize {
        self.order * self.dim * self.dim
    }

    pub fn is_subset(&self, other: &SupportSet) -> bool {
        self.coords.is_subset(&other.coords)
    }

    pub fn difference_count(&self, other: &SupportSet) -> usize {
        self.coords.difference(&other.coords).count()
    }

    pub fn union(&self, other: &SupportSet) -> SupportSet {
        SupportSet {
            dim: self.dim,
            order: self.order,
            coords: self.coords.union(&other.coords).copied().collect(),
        }
    }

    pub fn intersection(&self, other: &SupportSet) -> SupportSet {
        SupportSet {
            dim: self.dim,
            order: self.order,
            coords: self.coords.intersection(&other.coords).copied().collect(),
        }
    }
}

/// Intercepts `ν` and lag matrices `A_1..A_D`.
#[derive(Debug, Clone, PartialEq)]
pub struct GvarParams {
    nu: Array1<f64>,
    lag_mats: Vec<Array2<f64>>,
}

impl GvarParams {
    pub fn new(nu: Array1<f64>, lag_mats: Vec<Array2<f64>>) -> Result<Self> {
        let dim = nu.len();
        if dim == 0 {
            return Err(invalid!("intercept vector is empty"));
        }
        if lag_mats.is_empty() {
            return Err(invalid!("model order must be at least 1"));
        }
        for (d, a) in lag_mats.iter().enumerate() {
            if a.dim() != (dim, dim) {
                return Err(invalid!("A{} is {:?}, expected {dim}x{dim}", d + 1, a.dim()));
            }
        }
        if nu.iter().chain(lag_mats.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(invalid!("parameters must be finite"));
        }
        Ok(Self { nu, lag_mats })
    }

    pub fn zeros(dim: usize, order: usize) -> Self {
        Self {
            nu: Array1::zeros(dim),
            lag_mats: vec![Array2::zeros((dim, dim)); order],
        }
    }

    pub fn nu(&self) -> &Array1<f64> {
        &self.nu
    }

    pub fn nu_mut(&mut self) -> &mut Array1<f64> {
        &mut self.nu
    }

    pub fn lag_mats(&self) -> &[Array2<f64>] {
        &self.lag_mats
    }

    /// `A_{d+1}` for zero-based `d`.
    pub fn lag(&self, d: usize) -> &Array2<f64> {
        &self.lag_mats[d]
    }

    pub fn lag_mut(&mut self, d: usize) -> &mut Array2<f64> {
        &mut self.lag_mats[d]
    }

    pub fn dim(&self) -> usize {
        self.nu.len()
    }

    pub fn order(&self) -> usize {
        self.lag_mats.len()
    }

    /// Columns of the design matrix, `P = D·M + 1`.
    pub fn n_coef(&self) -> usize {
        self.order() * self.dim() + 1
    }

    pub fn get(&self, c: LagCoord) -> f64 {
        self.lag_mats[c.lag][[c.row, c.col]]
    }

    pub fn set(&mut self, c: LagCoord, v: f64) {
        self.lag_mats[c.lag][[c.row, c.col]] = v;
    }

    /// Lag coordinates with nonzero value (exact comparison).
    pub fn support(&self) -> SupportSet {
        let mut s = SupportSet::empty(self.dim(), self.order());
        for (d, a) in self.lag_mats.iter().enumerate() {
            for ((i, j), &v) in a.indexed_iter() {
                if v != 0.0 {
                    s.coords.insert(LagCoord::new(d, i, j));
                }
            }
        }
        s
    }

    /// Zeroes every lag coordinate outside `support`.
    pub fn restrict_to(&self, support: &SupportSet) -> GvarParams {
        let mut out = self.clone();
        for (d, a) in out.lag_mats.iter_mut().enumerate() {
            for ((i, j), v) in a.indexed_iter_mut() {
                if !support.contains(&LagCoord::new(d, i, j)) {
                    *v = 0.0;
                }
            }
        }
        out
    }

    /// `θ = ν + Σ_d A_d x_{t-d}`. `history[0]` is `x_{t-1}`, `history[D-1]` is `x_{t-D}`.
    pub fn conditional_log_mean(&self, history: &[&[f64]]) -> Result<Array1<f64>> {
        if history.len() != self.order() {
            return Err(invalid!("history has {} vectors, model order is {}", history.len(), self.order()));
        }
        if let Some(h) = history.iter().find(|h| h.len() != self.dim()) {
            return Err(invalid!("history vector has length {}, expected {}", h.len(), self.dim()));
        }
        let mut theta = self.nu.clone();
        for (a, x) in self.lag_mats.iter().zip(history) {
            theta += &a.dot(&ArrayView1::from(*x));
        }
        Ok(theta)
    }

    /// Column `m` of the coefficient matrix `B`: `(ν_m, A_1[m,·], ..., A_D[m,·])`.
    pub fn coef_column(&self, m: usize) -> Array1<f64> {
        let dim = self.dim();
        let mut b = Array1::zeros(self.n_coef());
        b[0] = self.nu[m];
        for (d, a) in self.lag_mats.iter().enumerate() {
            for j in 0..dim {
                b[1 + d * dim + j] = a[[m, j]];
            }
        }
        b
    }

    pub fn set_coef_column(&mut self, m: usize, b: ArrayView1<f64>) {
        let dim = self.dim();
        self.nu[m] = b[0];
        for (d, a) in self.lag_mats.iter_mut().enumerate() {
            for j in 0..dim {
                a[[m, j]] = b[1 + d * dim + j];
            }
        }
    }

    /// The `P × M` coefficient matrix `B = [ν'; A_1'; ...; A_D']`.
    pub fn coefficient_matrix(&self) -> Array2<f64> {
        let mut b = Array2::zeros((self.n_coef(), self.dim()));
        for m in 0..self.dim() {
            b.column_mut(m).assign(&self.coef_column(m));
        }
        b
    }

    pub fn from_coefficient_matrix(b: &Array2<f64>, order: usize) -> Result<Self> {
        let dim = b.ncols();
        if order == 0 || b.nrows() != order * dim + 1 {
            return Err(invalid!("coefficient matrix is {:?}, not consistent with order {order}", b.dim()));
        }
        let mut p = GvarParams::zeros(dim, order);
        for m in 0..dim {
            p.set_coef_column(m, b.column(m));
        }
        GvarParams::new(p.nu, p.lag_mats)
    }

    /// `β = vec(B)`, stacking the columns of `B`.
    pub fn to_beta(&self) -> Vec<f64> {
        (0..self.dim()).flat_map(|m| self.coef_column(m).to_vec()).collect()
    }

    pub fn from_beta(beta: &[f64], dim: usize, order: usize) -> Result<Self> {
        let p = order * dim + 1;
        if beta.len() != dim * p {
            return Err(invalid!("beta has length {}, expected {}", beta.len(), dim * p));
        }
        let b = Array2::from_shape_fn((p, dim), |(i, m)| beta[m * p + i]);
        Self::from_coefficient_matrix(&b, order)
    }

    /// Largest absolute lag coefficient.
    pub fn max_abs_lag(&self) -> f64 {
        self.lag_mats.iter().flatten().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// Index maps between the vectorized pseudo-parameter `β = vec(B)` (and the
/// vectorized response `vec(Y)`) and their block positions. All indices are
/// one-based, as in the usual matrix notation.
///
/// Coordinate `l` of `β` belongs to column `m = ⌈l/P⌉` of `B` at row
/// `p = l − (m−1)P`; observation `k` of `vec(Y)` is row `n = k − (m−1)N` of
/// column `m = ⌈k/N⌉`. These follow from the block-diagonal layout
/// `I_M ⊗ U` of the vectorized design. A closed form that reduces `l` modulo
/// `P` but adds the column indicator only when `l < P` places `l = P + 1` in
/// the first block; it is not used here.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoordMaps {
    dim: usize,
    n_coef: usize,
    n_rows: usize,
}

impl CoordMaps {
    pub fn new(dim: usize, order: usize, n_rows: usize) -> Result<Self> {
        if dim == 0 || order == 0 {
            return Err(invalid!("dimension and order must be positive"));
        }
        Ok(Self {
            dim,
            n_coef: order * dim + 1,
            n_rows,
        })
    }

    pub fn n_coef(&self) -> usize {
        self.n_coef
    }

    /// Length of `β`, `L = M·P`.
    pub fn beta_len(&self) -> usize {
        self.dim * self.n_coef
    }

    /// Length of `vec(Y)`, `K = N·M`.
    pub fn obs_len(&self) -> usize {
        self.dim * self.n_rows
    }

    pub fn beta_block(&self, l: usize) -> Result<(usize, usize)> {
        block_of(l, self.n_coef, self.beta_len())
    }

    pub fn beta_flat(&self, p: usize, m: usize) -> Result<usize> {
        flat_of(p, m, self.n_coef, self.dim)
    }

    pub fn obs_block(&self, k: usize) -> Result<(usize, usize)> {
        block_of(k, self.n_rows, self.obs_len())
    }

    pub fn obs_flat(&self, n: usize, m: usize) -> Result<usize> {
        flat_of(n, m, self.n_rows, self.dim)
    }
}

fn block_of(l: usize, stride: usize, len: usize) -> Result<(usize, usize)> {
    if l == 0 || l > len {
        return Err(invalid!("flat index {l} outside 1..={len}"));
    }
    let m = l.div_ceil(stride);
    Ok((l - (m - 1) * stride, m))
}

fn flat_of(p: usize, m: usize, stride: usize, dim: usize) -> Result<usize> {
    if p == 0 || p > stride || m == 0 || m > dim {
        return Err(invalid!("block index ({p}, {m}) outside 1..={stride} x 1..={dim}"));
    }
    Ok((m - 1) * stride + p)
}

/// Response `Y` (`N × M`) and lagged design `U` (`N × P`) of a series.
///
/// Rows run newest first: row 0 targets the last observation. Row `n` of `U`
/// is `(1, x'_{t-1}, ..., x'_{t-D})` for the target time `t` of row `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignPair {
    y: Array2<f64>,
    u: Array2<f64>,
    order: usize,
    target_times: Vec<usize>,
    log_fact: Array1<f64>,
}

/// Arranges a series into `(Y, U)` for a model of the given order.
pub fn build_design(series: &CountSeries, order: usize) -> Result<DesignPair> {
    build_design_excluding(series, order, &[])
}

/// Like [`build_design`], dropping the rows whose target time is listed in
/// `exclude_targets`.
pub fn build_design_excluding(series: &CountSeries, order: usize, exclude_targets: &[usize]) -> Result<DesignPair> {
    series.require_len(order)?;
    let dim = series.dim();
    let big_t = series.len();
    let targets: Vec<usize> = (order..big_t).rev().filter(|t| !exclude_targets.contains(t)).collect();
    if targets.is_empty() {
        return Err(invalid!("no design rows left after exclusions"));
    }
    let n = targets.len();
    let p = order * dim + 1;
    let mut y = Array2::zeros((n, dim));
    let mut u = Array2::zeros((n, p));
    for (row, &t) in targets.iter().enumerate() {
        for m in 0..dim {
            y[[row, m]] = series.get(t, m) as f64;
        }
        u[[row, 0]] = 1.0;
        for d in 0..order {
            for j in 0..dim {
                u[[row, 1 + d * dim + j]] = series.get(t - d - 1, j) as f64;
            }
        }
    }
    let log_fact = Array1::from_shape_fn(dim, |m| targets.iter().map(|&t| ln_factorial(series.get(t, m))).sum());
    Ok(DesignPair {
        y,
        u,
        order,
        target_times: targets,
        log_fact,
    })
}

impl DesignPair {
    pub fn y(&self) -> &Array2<f64> {
        &self.y
    }

    pub fn u(&self) -> &Array2<f64> {
        &self.u
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.y.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_coef(&self) -> usize {
        self.u.ncols()
    }

    /// Original time index targeted by each row.
    pub fn target_times(&self) -> &[usize] {
        &self.target_times
    }

    /// `Σ_n ln(y_{nm}!)` for column `m`.
    pub fn log_factorial_sum(&self, m: usize) -> f64 {
        self.log_fact[m]
    }

    pub(crate) fn check_params(&self, params: &GvarParams) -> Result<()> {
        if params.dim() != self.dim() || params.order() != self.order {
            return Err(invalid!(
                "parameters are {}-dimensional of order {}, design is {}-dimensional of order {}",
                params.dim(),
                params.order(),
                self.dim(),
                self.order
            ));
        }
        Ok(())
    }

    /// Linear predictor `η = U B` (`N × M`).
    pub fn linear_predictor(&self, params: &GvarParams) -> Result<Array2<f64>> {
        self.check_params(params)?;
        Ok(self.u.dot(&params.coefficient_matrix()))
    }

    /// `ℓ(B; Y, U) = Σ y·η − exp(η) − ln y!`.
    pub fn log_likelihood(&self, params: &GvarParams) -> Result<f64> {
        let eta = self.linear_predictor(params)?;
        let mut ll = 0.0;
        for ((n, m), &e) in eta.indexed_iter() {
            let mu = checked_exp(e, self.target_times[n], m)?;
            ll += self.y[[n, m]] * e - mu;
        }
        Ok(ll - self.log_fact.sum())
    }

    /// Poisson deviance `2 Σ [y ln(y/μ) − (y − μ)]`, with `0·ln 0 = 0`.
    pub fn deviance(&self, params: &GvarParams) -> Result<f64> {
        let eta = self.linear_predictor(params)?;
        let mut dev = 0.0;
        for ((n, m), &e) in eta.indexed_iter() {
            let mu = checked_exp(e, self.target_times[n], m)?;
            let y = self.y[[n, m]];
            let ylogy = if y > 0.0 { y * y.ln() } else { 0.0 };
            dev += ylogy - y * e - y + mu;
        }
        Ok(2.0 * dev)
    }

    /// Score `∂ℓ/∂B = U'(Y − μ)` as a `P × M` matrix.
    pub fn score(&self, params: &GvarParams) -> Result<Array2<f64>> {
        let mut resid = self.linear_predictor(params)?;
        for ((n, m), e) in resid.indexed_iter_mut() {
            *e = self.y[[n, m]] - checked_exp(*e, self.target_times[n], m)?;
        }
        Ok(self.u.t().dot(&resid))
    }

    /// Log-likelihood of `β` under the vectorized model
    /// `vec(Y) ~ Poisson(exp((I_M ⊗ U) β))`, evaluated entry by entry through
    /// [`CoordMaps`]. Equal to [`DesignPair::log_likelihood`] whenever the
    /// index maps are right; it is quadratic in size and meant for checking.
    pub fn vectorized_log_likelihood(&self, beta: &[f64]) -> Result<f64> {
        let maps = CoordMaps::new(self.dim(), self.order, self.n_rows())?;
        if beta.len() != maps.beta_len() {
            return Err(invalid!("beta has length {}, expected {}", beta.len(), maps.beta_len()));
        }
        let mut ll = 0.0;
        for k in 1..=maps.obs_len() {
            let (n, m) = maps.obs_block(k)?;
            let mut eta = 0.0;
            for (l, b) in beta.iter().enumerate() {
                let (p, block) = maps.beta_block(l + 1)?;
                if block == m {
                    eta += self.u[[n - 1, p - 1]] * b;
                }
            }
            let y = self.y[[n - 1, m - 1]];
            ll += y * eta - checked_exp(eta, self.target_times[n - 1], m - 1)? - ln_factorial(y as u64);
        }
        Ok(ll)
    }
}

fn check_series(params: &GvarParams, series: &CountSeries) -> Result<()> {
    if params.dim() != series.dim() {
        return Err(invalid!("parameters are {}-dimensional, series is {}-dimensional", params.dim(), series.dim()));
    }
    series.require_len(params.order())
}

/// Conditional log-likelihood `Σ_{t≥D} Σ_m [x θ − e^θ − ln x!]`, computed
/// directly from the series.
pub fn log_likelihood(params: &GvarParams, series: &CountSeries) -> Result<f64> {
    check_series(params, series)?;
    let mut ll = 0.0;
    for_each_log_mean(params, series, |t, m, theta| {
        let x = series.get(t, m);
        ll += x as f64 * theta - checked_exp(theta, t, m)? - ln_factorial(x);
        Ok(())
    })?;
    Ok(ll)
}

/// Deviance `−2(ℓ − ℓ₀)` against the saturated model with `μ_{t,m} = x_{t,m}`.
pub fn deviance(params: &GvarParams, series: &CountSeries) -> Result<f64> {
    check_series(params, series)?;
    let mut dev = 0.0;
    for_each_log_mean(params, series, |t, m, theta| {
        let x = series.get(t, m) as f64;
        let xlogx = if x > 0.0 { x * x.ln() } else { 0.0 };
        dev += xlogx - x * theta - x + checked_exp(theta, t, m)?;
        Ok(())
    })?;
    Ok(2.0 * dev)
}

/// Gradient of [`log_likelihood`], returned with the same shape as the parameters.
pub fn log_likelihood_gradient(params: &GvarParams, series: &CountSeries) -> Result<GvarParams> {
    check_series(params, series)?;
    let dim = params.dim();
    let mut grad = GvarParams::zeros(dim, params.order());
    for_each_log_mean(params, series, |t, m, theta| {
        let r = series.get(t, m) as f64 - checked_exp(theta, t, m)?;
        grad.nu[m] += r;
        for d in 0..grad.lag_mats.len() {
            for j in 0..dim {
                grad.lag_mats[d][[m, j]] += r * series.get(t - d - 1, j) as f64;
            }
        }
        Ok(())
    })?;
    Ok(grad)
}

fn for_each_log_mean(
    params: &GvarParams,
    series: &CountSeries,
    mut f: impl FnMut(usize, usize, f64) -> Result<()>,
) -> Result<()> {
    let dim = params.dim();
    for t in params.order()..series.len() {
        for m in 0..dim {
            let mut theta = params.nu[m];
            for (d, a) in params.lag_mats.iter().enumerate() {
                for j in 0..dim {
                    theta += a[[m, j]] * series.get(t - d - 1, j) as f64;
                }
            }
            f(t, m, theta)?;
        }
    }
    Ok(())
}
