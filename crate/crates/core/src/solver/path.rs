use super::{fit_design, FitResult, Penalty, SolverConfig};
use crate::error::{invalid, GvarError, Result};
use crate::model::{build_design, CountSeries, DesignPair};

/// Relative margin added to the analytic `λ_max` so that rounding in the
/// coordinate updates cannot admit a coefficient exactly at the endpoint.
const LAMBDA_MAX_MARGIN: f64 = 1e-10;

/// Strictly decreasing grid of positive penalties sharing one mixing value.
#[derive(Debug, Clone, PartialEq)]
pub struct RegPath {
    lambdas: Vec<f64>,
    alpha: f64,
}

impl RegPath {
    pub fn new(lambdas: Vec<f64>, alpha: f64) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(invalid!("regularization path is empty"));
        }
        if lambdas.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(invalid!("path values must be positive and finite"));
        }
        if lambdas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid!("path must be strictly decreasing"));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(invalid!("alpha must lie in [0, 1]"));
        }
        Ok(Self { lambdas, alpha })
    }

    /// `n` log-spaced values from `hi` down to `lo`.
    pub fn log_spaced(hi: f64, lo: f64, n: usize, alpha: f64) -> Result<Self> {
        if n < 2 || !(lo > 0.0 && lo < hi) {
            return Err(invalid!("need n >= 2 and 0 < lo < hi (got n={n}, lo={lo}, hi={hi})"));
        }
        let (a, b) = (hi.ln(), lo.ln());
        let mut lambdas: Vec<f64> = (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect();
        lambdas[0] = hi;
        lambdas[n - 1] = lo;
        Self::new(lambdas, alpha)
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn penalty(&self, i: usize) -> Penalty {
        Penalty::new(self.lambdas[i], self.alpha).expect("validated path")
    }
}

/// Smallest `λ` at which every lag coefficient is zero: with intercepts at
/// their intercept-only MLE `ln ȳ_m`, the largest `|u_p'(y_m − ȳ_m)| / α`
/// over lag columns `p` and components `m`.
pub fn lambda_max_design(design: &DesignPair, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid!("lambda_max needs alpha in (0, 1], got {alpha}"));
    }
    let u = design.u();
    let mut best = 0.0f64;
    for (m, y) in design.y().columns().into_iter().enumerate() {
        let mean = y.mean().unwrap_or(0.0);
        if mean <= 0.0 {
            return Err(GvarError::DegenerateData(format!("component {} is identically zero", m + 1)));
        }
        for p in 1..design.n_coef() {
            let g: f64 = y.iter().zip(u.column(p)).map(|(&y, &u)| (y - mean) * u).sum();
            best = best.max(g.abs());
        }
    }
    if best == 0.0 {
        return Err(GvarError::DegenerateData("no lag column is correlated with any response".into()));
    }
    Ok(best / alpha * (1.0 + LAMBDA_MAX_MARGIN))
}

pub fn lambda_max(series: &CountSeries, order: usize, alpha: f64) -> Result<f64> {
    lambda_max_design(&build_design(series, order)?, alpha)
}

/// `n_lambda` log-spaced values from `λ_max` to `min_ratio·λ_max`.
pub fn path_design(design: &DesignPair, alpha: f64, n_lambda: usize, min_ratio: f64) -> Result<RegPath> {
    if n_lambda < 2 || !(min_ratio > 0.0 && min_ratio < 1.0) {
        return Err(invalid!("need n_lambda >= 2 and 0 < min_ratio < 1"));
    }
    let top = lambda_max_design(design, alpha)?;
    RegPath::log_spaced(top, top * min_ratio, n_lambda, alpha)
}

pub fn default_path(series: &CountSeries, order: usize, alpha: f64, n_lambda: usize, min_ratio: f64) -> Result<RegPath> {
    path_design(&build_design(series, order)?, alpha, n_lambda, min_ratio)
}

/// Fits every value of `path` in order, warm-starting each fit from the
/// previous successful one. Failures are reported per value.
pub fn fit_path(design: &DesignPair, path: &RegPath, config: &SolverConfig) -> Vec<Result<FitResult>> {
    let mut out = Vec::with_capacity(path.len());
    let mut warm = None;
    for i in 0..path.len() {
        let fit = fit_design(design, &path.penalty(i), config, warm.as_ref());
        if let Ok(f) = &fit {
            warm = Some(f.params.clone());
        }
        out.push(fit);
    }
    out
}

/// Default path restricted to where the support size changes.
///
/// A pilot path of `pilot_points` values over the full range is fitted; the
/// returned grid spans from the last pilot value whose support is within one
/// coordinate of the sparsest pilot support, down to the first pilot value
/// within one coordinate of the densest. Endpoint support sizes therefore
/// differ by at least the full-range difference minus two. Falls back to the
/// full range when the pilot is uninformative or any pilot fit fails.
pub fn narrowed_path(
    design: &DesignPair,
    alpha: f64,
    n_lambda: usize,
    min_ratio: f64,
    pilot_points: usize,
    config: &SolverConfig,
) -> Result<RegPath> {
    let full = path_design(design, alpha, n_lambda, min_ratio)?;
    let pilot = path_design(design, alpha, pilot_points.max(3), min_ratio)?;
    let sizes: Result<Vec<usize>> = fit_path(design, &pilot, config)
        .into_iter()
        .map(|f| f.map(|f| f.support.len()))
        .collect();
    let Ok(sizes) = sizes else {
        return Ok(full);
    };
    let (first, last) = (sizes[0], sizes[sizes.len() - 1]);
    let upper = sizes.iter().rposition(|&s| s <= first + 1).unwrap_or(0);
    let lower = sizes.iter().position(|&s| s + 1 >= last).unwrap_or(sizes.len() - 1);
    if lower <= upper {
        return Ok(full);
    }
    let lam = pilot.lambdas();
    RegPath::log_spaced(lam[upper], lam[lower], n_lambda, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn series() -> CountSeries {
        // deterministic, mildly autocorrelated two-component series
        let mut rows = Vec::new();
        let (mut a, mut b) = (3u64, 1u64);
        for t in 0..120u64 {
            a = (a * 7 + t) % 9;
            b = (b + a + t % 3) % 6;
            rows.push(vec![a + 1, b]);
        }
        CountSeries::from_rows(&rows).unwrap()
    }

    #[test]
    fn path_endpoints_and_shape() {
        let s = series();
        let top = lambda_max(&s, 1, 1.0).unwrap();
        let p = default_path(&s, 1, 1.0, 2, 0.1).unwrap();
        assert_eq!(p.lambdas(), &[top, 0.1 * top]);
        let p = default_path(&s, 1, 1.0, 50, 1e-3).unwrap();
        assert_eq!(p.len(), 50);
        assert!(p.lambdas().windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn lambda_max_zeroes_everything() {
        let s = series();
        let top = lambda_max(&s, 1, 1.0).unwrap();
        let cfg = SolverConfig::default();
        for scale in [1.0, 1.01] {
            let fit = super::super::lasso_gvar(&s, 1, &Penalty::new(top * scale, 1.0).unwrap(), &cfg, None).unwrap();
            assert!(fit.support.is_empty());
        }
        let fit = super::super::lasso_gvar(&s, 1, &Penalty::with_ridge(0.0, 1.0, 0.0).unwrap(), &cfg, None).unwrap();
        assert_eq!(fit.support.len(), 4);
    }

    #[test]
    fn lambda_max_scales_with_alpha() {
        let s = series();
        let a = lambda_max(&s, 1, 1.0).unwrap();
        let b = lambda_max(&s, 1, 0.5).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-9 * a);
        assert!(lambda_max(&s, 1, 0.0).is_err());
    }

    #[test]
    fn zero_series_is_degenerate() {
        let s = CountSeries::new(Array2::zeros((10, 2))).unwrap();
        assert!(matches!(lambda_max(&s, 1, 1.0), Err(GvarError::DegenerateData(_))));
    }

    #[test]
    fn path_validation() {
        assert!(RegPath::new(vec![1.0, 1.0], 1.0).is_err());
        assert!(RegPath::new(vec![1.0, 0.0], 1.0).is_err());
        assert!(RegPath::new(vec![], 1.0).is_err());
        assert!(RegPath::new(vec![2.0, 1.0], 1.0).is_ok());
        assert!(default_path(&series(), 1, 1.0, 1, 0.1).is_err());
        assert!(default_path(&series(), 1, 1.0, 5, 1.0).is_err());
    }

    #[test]
    fn narrowing_keeps_support_variation() {
        let s = series();
        let d = build_design(&s, 1).unwrap();
        let cfg = SolverConfig::default();
        let full = path_design(&d, 1.0, 12, 1e-3).unwrap();
        let sizes = |p: &RegPath| -> (usize, usize) {
            let fits = fit_path(&d, p, &cfg);
            let first = fits[0].as_ref().unwrap().support.len();
            let last = fits[fits.len() - 1].as_ref().unwrap().support.len();
            (first, last)
        };
        let (f0, f1) = sizes(&full);
        let narrow = narrowed_path(&d, 1.0, 12, 1e-3, 12, &cfg).unwrap();
        let (n0, n1) = sizes(&narrow);
        assert!(n1 as i64 - n0 as i64 >= f1 as i64 - f0 as i64 - 2);
        assert!(narrow.lambdas()[0] <= full.lambdas()[0]);
    }
}
