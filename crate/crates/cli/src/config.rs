//! Experiment configuration: generator settings per task plus model,
//! training and few-shot defaults. Stored as TOML.

use std::collections::BTreeMap;
use std::path::Path;

use gdt_core::pe::PeKind;
use gdt_core::tasks::{GenParams, TaskKind};
use gdt_nn::{Activation, ModelShape, OptimConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// The configuration shipped with the repository.
pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/tasks.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDefaults {
    pub d: usize,
    pub d_f: usize,
    #[serde(rename = "T")]
    pub layers: usize,
    #[serde(rename = "h")]
    pub heads: usize,
    pub pe_k: usize,
    pub activation: Activation,
    #[serde(default)]
    pub dropout: f64,
}

impl ModelDefaults {
    pub fn shape(&self, pe: PeKind) -> ModelShape {
        ModelShape {
            d: self.d,
            d_f: self.d_f,
            layers: self.layers,
            heads: self.heads,
            pe,
            pe_k: self.pe_k,
            activation: self.activation,
            dropout: self.dropout,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingDefaults {
    /// Graph size of the training and in-distribution evaluation sets.
    pub n: usize,
    pub train_graphs: usize,
    pub eval_graphs: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl TrainingDefaults {
    pub fn optim(&self, seed: u64) -> OptimConfig {
        OptimConfig::new(self.learning_rate, self.batch_size, self.steps, seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FewShotDefaults {
    pub n: usize,
    /// Target graphs whose nodes form the support and query pool.
    pub graphs: usize,
    pub shots: usize,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Keyed by task name.
    pub generators: BTreeMap<String, GenParams>,
    pub model: ModelDefaults,
    pub training: TrainingDefaults,
    pub fewshot: FewShotDefaults,
}

impl ExperimentConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        for task in TaskKind::ALL {
            let p = cfg.generator(task)?;
            p.edge_probability(2).map_err(|e| CliError::Usage(format!("config [generators.{}]: {e}", task.name())))?;
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    /// The file at `path`, or the built-in defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text)
            }
            None => Self::from_toml(DEFAULT_CONFIG),
        }
    }

    pub fn generator(&self, task: TaskKind) -> Result<&GenParams> {
        self.generators
            .get(task.name())
            .ok_or_else(|| CliError::Usage(format!("config has no [generators.{}]", task.name())))
    }
}
