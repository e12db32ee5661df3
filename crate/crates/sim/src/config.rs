//! Experiment configuration: simulation parameters plus the sweep matrix,
//! loaded from TOML and adjusted by command-line overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use svo_core::{IbrConfig, SimConfig};

use crate::error::{Result, SimError};

/// One (shared-control size, density) cell of the matrix. `n_agents`
/// overrides the population size for that cell only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub n_sc: usize,
    pub density: f64,
    #[serde(default)]
    pub n_agents: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixConfig {
    pub seeds: Vec<u64>,
    pub proportions: Vec<f64>,
    pub variants: Vec<Variant>,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self {
            seeds: (0..10).collect(),
            proportions: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            variants: vec![Variant { n_sc: 1, density: 3000.0, n_agents: None }],
        }
    }
}

impl MatrixConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() || self.proportions.is_empty() || self.variants.is_empty() {
            return Err(SimError::Config("sweep needs at least one seed, proportion and variant".into()));
        }
        if let Some(p) = self.proportions.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(SimError::Config(format!("proportion {p} outside [0, 1]")));
        }
        if let Some(v) = self.variants.iter().find(|v| !(v.density > 0.0)) {
            return Err(SimError::Config(format!("variant density {} must be positive", v.density)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub sweep: MatrixConfig,
    /// Worker threads; all available cores when unset.
    pub jobs: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SimError::Config(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Self::from_toml(&text)
    }
}

/// Command-line values that replace config-file entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub agents: Option<usize>,
    pub density: Option<f64>,
    pub p_cooperative: Option<f64>,
    pub n_sc: Option<usize>,
    pub steps: Option<usize>,
    pub lanes: Option<usize>,
    pub deterministic: Option<bool>,
    pub jobs: Option<usize>,
}

impl Overrides {
    /// A seed narrows the matrix to that seed; a proportion narrows it to
    /// the proportion and its p = 0 baseline; shared-control size and
    /// density apply to every variant.
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        let sim = &mut cfg.sim;
        if let Some(n) = self.agents {
            sim.n_agents = n;
        }
        if let Some(d) = self.density {
            sim.density = d;
        }
        if let Some(p) = self.p_cooperative {
            sim.p_cooperative = p;
            cfg.sweep.proportions = if p == 0.0 { vec![0.0] } else { vec![0.0, p] };
        }
        if let Some(n) = self.n_sc {
            sim.ibr = IbrConfig { shrink_schedule: IbrConfig::with_shared_control(n).shrink_schedule, ..sim.ibr.clone() };
        }
        if let Some(s) = self.steps {
            sim.n_steps = s;
        }
        if let Some(l) = self.lanes {
            sim.road.lane_count = l;
        }
        if let Some(d) = self.deterministic {
            sim.deterministic = d;
        }
        if let Some(seed) = self.seed {
            cfg.sweep.seeds = vec![seed];
        }
        for v in &mut cfg.sweep.variants {
            if let Some(n) = self.n_sc {
                v.n_sc = n;
            }
            if let Some(d) = self.density {
                v.density = d;
            }
            if let Some(n) = self.agents {
                v.n_agents = Some(n);
            }
        }
        if self.jobs.is_some() {
            cfg.jobs = self.jobs;
        }
    }
}
