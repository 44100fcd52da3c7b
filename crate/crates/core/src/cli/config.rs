use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::selection::{Method, SelectionConfig};
use crate::simulation::{ProposalConfig, SimConfig, DEFAULT_BURN_IN, DEFAULT_MEAN_CAP};
use crate::solver::SolverConfig;

/// Settings of parameter proposals that do not vary across study cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposalSection {
    pub magnitude_range: (f64, f64),
    pub intercept_value: f64,
    pub recover_lo: f64,
    pub recover_hi: f64,
    pub recover_reps: usize,
    pub recover_len: usize,
    pub max_proposals: usize,
}

impl Default for ProposalSection {
    fn default() -> Self {
        let p = ProposalConfig::default();
        Self {
            magnitude_range: p.magnitude_range,
            intercept_value: p.intercept_value,
            recover_lo: p.recover_lo,
            recover_hi: p.recover_hi,
            recover_reps: p.recover_reps,
            recover_len: p.recover_len,
            max_proposals: p.max_proposals,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub burn_in: usize,
    pub mean_cap: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            burn_in: DEFAULT_BURN_IN,
            mean_cap: DEFAULT_MEAN_CAP,
        }
    }
}

/// Factorial simulation study plus the settings of every stage. Every field
/// has a default; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub dims: Vec<usize>,
    pub sparsities: Vec<f64>,
    pub lengths: Vec<usize>,
    pub n_param_draws: usize,
    pub n_series_reps: usize,
    pub methods: Vec<Method>,
    pub order: usize,
    pub master_seed: u64,
    pub proposal: ProposalSection,
    pub simulation: SimulationSection,
    pub selection: SelectionConfig,
    pub solver: SolverConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            dims: vec![10, 15, 20],
            sparsities: vec![0.01, 0.02, 0.05],
            lengths: vec![500, 1000, 2000],
            n_param_draws: 10,
            n_series_reps: 5,
            methods: vec![Method::Cv, Method::SupportAgg, Method::ModelAgg, Method::Combined],
            order: 1,
            master_seed: 0,
            proposal: ProposalSection::default(),
            simulation: SimulationSection::default(),
            selection: SelectionConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl StudyConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: StudyConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.sparsities.is_empty() || self.lengths.is_empty() || self.methods.is_empty() {
            return Err(invalid!("dims, sparsities, lengths and methods must be nonempty"));
        }
        if self.n_param_draws == 0 || self.n_series_reps == 0 || self.order == 0 {
            return Err(invalid!("n_param_draws, n_series_reps and order must be at least 1"));
        }
        for &dim in &self.dims {
            for &s in &self.sparsities {
                self.proposal_config(dim, s).validate()?;
            }
        }
        for &length in &self.lengths {
            self.sim_config(length, 0).validate()?;
        }
        self.selection.validate()?;
        self.solver.validate()
    }

    pub fn proposal_config(&self, dim: usize, sparsity: f64) -> ProposalConfig {
        let p = &self.proposal;
        ProposalConfig {
            dim,
            order: self.order,
            sparsity,
            magnitude_range: p.magnitude_range,
            intercept_value: p.intercept_value,
            recover_lo: p.recover_lo,
            recover_hi: p.recover_hi,
            recover_reps: p.recover_reps,
            recover_len: p.recover_len,
            max_proposals: p.max_proposals,
            burn_in: self.simulation.burn_in,
            mean_cap: self.simulation.mean_cap,
        }
    }

    pub fn sim_config(&self, length: usize, seed: u64) -> SimConfig {
        SimConfig {
            length,
            burn_in: self.simulation.burn_in,
            seed,
            mean_cap: self.simulation.mean_cap,
        }
    }
}
