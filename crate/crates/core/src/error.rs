use thiserror::Error;

/// Summary of the recoverability scores of rejected parameter proposals.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionSummary {
    pub attempts: usize,
    /// Proposals that failed before scoring (placement or instability).
    pub failed: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl std::fmt::Display for RejectionSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} proposals ({} failed before scoring); scores min {:.4}, median {:.4}, max {:.4}",
            self.attempts, self.failed, self.min, self.median, self.max
        )
    }
}

#[derive(Debug, Error)]
pub enum GvarError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// `exp` of a linear predictor would overflow. `t` is the time index of the
    /// target observation, `component` the process component.
    #[error("numeric overflow evaluating the conditional mean at t={t}, component {component}")]
    NumericOverflow { t: usize, component: usize },

    #[error("IRLS diverged: penalized objective increased for {consecutive} consecutive outer iterations")]
    Diverged { consecutive: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("process unstable at step {t}: conditional mean {mean:.3e} exceeds cap {cap:.3e}")]
    Unstable { t: usize, mean: f64, cap: f64 },

    #[error("nonzero placement infeasible: {0}")]
    Placement(String),

    #[error("no proposal accepted: {0}")]
    AcceptanceFailure(RejectionSummary),

    #[error("selection failed: {0}")]
    Selection(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("{task}: {source}")]
    Task {
        task: String,
        #[source]
        source: Box<GvarError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl GvarError {
    pub(crate) fn in_task(self, task: impl Into<String>) -> Self {
        GvarError::Task {
            task: task.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = GvarError> = std::result::Result<T, E>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::GvarError::InvalidInput(format!($($arg)*))
    };
}
pub(crate) use invalid;
