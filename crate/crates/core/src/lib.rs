//! Sparse support estimation for Poisson generalized vector autoregressions.
//!
//! The crate fits `M`-dimensional Poisson GVAR(D) models with an
//! elastic-net coordinate-descent IRLS solver and estimates which lag
//! coefficients are nonzero. Besides the plain LASSO and cross-validated
//! selection, it implements support aggregation (thresholded intersection of
//! LASSO supports over block resamples) and model aggregation (frequency
//! filtering of per-partition optimal supports), plus the simulation
//! machinery needed to benchmark them.
//!
//! ```
//! use gvar::model::{CountSeries, GvarParams};
//! use gvar::simulation::{simulate, SimConfig};
//! use gvar::solver::{lasso_gvar, lambda_max, Penalty, SolverConfig};
//! use ndarray::array;
//!
//! let truth = GvarParams::new(array![1.0, 1.0], vec![array![[0.0, 0.0], [-0.6, 0.0]]]).unwrap();
//! let series = simulate(&truth, &SimConfig { length: 400, seed: 1, ..Default::default() }).unwrap();
//! let top = lambda_max(&series, 1, 1.0).unwrap();
//! let fit = lasso_gvar(&series, 1, &Penalty::new(top, 1.0).unwrap(), &SolverConfig::default(), None).unwrap();
//! assert!(fit.support.is_empty());
//! ```

pub mod cli;
pub mod error;
pub mod metrics;
pub mod model;
pub mod resampling;
pub mod rng;
pub mod selection;
pub mod simulation;
pub mod solver;

pub use error::{GvarError, Result};
pub use model::{CountSeries, DesignPair, GvarParams, LagCoord, SupportSet};

// The README and the chapters of the guide in book/src are compiled as
// doc-tests so their snippets stay in sync with the API.
#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/resampling.md")]
    mod resampling {}
    #[doc = include_str!("../../../book/src/selection.md")]
    mod selection {}
    #[doc = include_str!("../../../book/src/study.md")]
    mod study {}
}
