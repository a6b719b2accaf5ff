//! The HyperAggregation operator and the four architectures sharing one
//! configuration surface: GraphHyperConv (GHC), GraphHyperMixer (GHM), and
//! the GCN / MLP baselines.

mod arch;
mod checkpoint;
mod ha;

pub use arch::{
    forward, gcn_propagation, graph_readout, supervision, ForwardCtx, Model, Sampling,
    Supervision,
};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use ha::{ha_core_param_count, hyper_aggregate, HaSettings, HaVars};

use serde::{Deserialize, Serialize};

use crate::error::{HgError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Ghc,
    Ghm,
    Gcn,
    Mlp,
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Arch::Ghc => "ghc",
            Arch::Ghm => "ghm",
            Arch::Gcn => "gcn",
            Arch::Mlp => "mlp",
        };
        f.write_str(s)
    }
}

/// Per-vertex reduction after aggregating a neighborhood (GHC only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    Root,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    VertexCls,
    GraphCls,
    GraphReg,
}

impl Task {
    pub fn is_graph_level(&self) -> bool {
        matches!(self, Task::GraphCls | Task::GraphReg)
    }
}

/// Every architectural and ablation knob in one place.
///
/// `trans_ha_input` / `trans_ha_output` toggle the {layer norm, dropout}
/// bundle before / after the target network, at rate `model_dropout`;
/// `pre_activation` is the separate optional activation at the aggregation
/// input; `mixing_dropout` acts on the embeddings entering the target
/// network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    pub depth: usize,
    pub hidden: usize,
    pub mixing: usize,
    /// GHM sampling radius.
    pub k_hop: usize,
    /// GHM sampled subgraph size cap (0 means unbounded).
    pub subgraph_cap: usize,
    /// GHM minibatch size (root vertices per step).
    pub batch_size: usize,
    /// Re-use the first epoch's subgraph samples for the whole run.
    pub freeze_sampling: bool,
    pub normalize_input: bool,
    pub self_loops: bool,
    pub undirected: bool,
    pub root_connection: bool,
    pub residual: bool,
    pub readout: Readout,
    pub pre_activation: bool,
    pub trans_ha_input: bool,
    pub trans_ha_output: bool,
    pub input_dropout: f64,
    pub model_dropout: f64,
    pub mixing_dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub task: Task,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            arch: Arch::Ghc,
            depth: 2,
            hidden: 64,
            mixing: 64,
            k_hop: 2,
            subgraph_cap: 50,
            batch_size: 32,
            freeze_sampling: false,
            normalize_input: false,
            self_loops: true,
            undirected: true,
            root_connection: true,
            residual: false,
            readout: Readout::Root,
            pre_activation: false,
            trans_ha_input: false,
            trans_ha_output: true,
            input_dropout: 0.0,
            model_dropout: 0.5,
            mixing_dropout: 0.0,
            lr: 0.01,
            weight_decay: 5e-4,
            task: Task::VertexCls,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(HgError::config("depth must be >= 1".to_string()));
        }
        if self.hidden < 1 || self.mixing < 1 {
            return Err(HgError::config("hidden and mixing must be >= 1".to_string()));
        }
        if self.arch == Arch::Ghm {
            if self.k_hop < 1 {
                return Err(HgError::config("k_hop must be >= 1".to_string()));
            }
            if self.batch_size < 1 {
                return Err(HgError::config("batch_size must be >= 1".to_string()));
            }
        }
        for (name, p) in [
            ("input_dropout", self.input_dropout),
            ("model_dropout", self.model_dropout),
            ("mixing_dropout", self.mixing_dropout),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(HgError::config(format!("{name} must be in [0,1), got {p}")));
            }
        }
        if self.lr <= 0.0 {
            return Err(HgError::config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(HgError::config("weight_decay must be >= 0".to_string()));
        }
        Ok(())
    }

    /// GHM's sampling cap as an option (0 in the config means unbounded).
    pub fn cap(&self) -> usize {
        if self.subgraph_cap == 0 {
            usize::MAX
        } else {
            self.subgraph_cap
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ModelConfig::default().validate().unwrap();
    }

    #[test]
    fn bad_dropout_rejected() {
        let cfg = ModelConfig {
            model_dropout: 1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ModelConfig {
            arch: Arch::Ghm,
            mixing: 32,
            task: Task::GraphReg,
            ..Default::default()
        };
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ModelConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }
}
