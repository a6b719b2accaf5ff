//! Experiment config files: TOML with [experiment], [model], and [data]
//! sections mirroring the library's config types, plus dotted-path
//! overrides (`--set model.mixing=32`). Unknown keys are rejected so a typo
//! cannot silently fall back to a default.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use hyperagg::graph::{generate_sbm, load_graph, Graph, SbmConfig};
use hyperagg::harness::{ExperimentSpec, Metric, Setting};
use hyperagg::models::ModelConfig;
use hyperagg::rng::stream;
use hyperagg::HgError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub setting: Setting,
    pub seeds: Vec<u64>,
    pub max_epochs: usize,
    pub patience: usize,
    pub metric: Metric,
    #[serde(skip)]
    pub parallel: usize,
    #[serde(skip)]
    pub measure_time: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            setting: Setting::Transductive,
            seeds: vec![0],
            max_epochs: 1000,
            patience: 100,
            metric: Metric::Accuracy,
            parallel: 1,
            measure_time: true,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// HAGRAPH dataset file.
    pub path: Option<PathBuf>,
    /// Synthetic dataset generated on the fly.
    pub sbm: Option<SbmSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbmSection {
    pub n: usize,
    pub classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feat_dim: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SbmSection {
    fn default() -> Self {
        SbmSection {
            n: 1000,
            classes: 4,
            p_in: 0.02,
            p_out: 0.002,
            feat_dim: 4,
            noise: 1.0,
            seed: 0,
        }
    }
}

impl DataSection {
    /// Loads the dataset; exactly one source must be configured.
    pub fn load(&self) -> anyhow::Result<(Graph, String)> {
        match (&self.path, &self.sbm) {
            (Some(path), None) => {
                let g = load_graph(path)
                    .with_context(|| format!("loading dataset {}", path.display()))?;
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "dataset".to_string());
                Ok((g, name))
            }
            (None, Some(sbm)) => {
                let cfg = SbmConfig {
                    num_vertices: sbm.n,
                    classes: sbm.classes,
                    p_in: sbm.p_in,
                    p_out: sbm.p_out,
                    feat_dim: sbm.feat_dim,
                    noise: sbm.noise,
                };
                let g = generate_sbm(&cfg, &mut stream(sbm.seed, "sbm"))?;
                Ok((g, "sbm".to_string()))
            }
            (Some(_), Some(_)) => Err(HgError::config(
                "config has both data.path and data.sbm; pick one".to_string(),
            )
            .into()),
            (None, None) => Err(HgError::config(
                "config needs a data source: data.path or data.sbm".to_string(),
            )
            .into()),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffectiveConfig {
    pub experiment: ExperimentSection,
    pub model: ModelConfig,
    pub data: DataSection,
}

impl EffectiveConfig {
    pub fn to_spec(&self) -> ExperimentSpec {
        ExperimentSpec {
            model: self.model.clone(),
            setting: self.experiment.setting,
            seeds: self.experiment.seeds.clone(),
            max_epochs: self.experiment.max_epochs,
            patience: self.experiment.patience,
            metric: self.experiment.metric,
            measure_time: self.experiment.measure_time,
            parallel: self.experiment.parallel,
        }
    }
}

/// Reads the file, applies `--set key.path=value` overrides onto the raw
/// TOML, and deserializes strictly.
pub fn load_effective(path: &Path, overrides: &[String]) -> anyhow::Result<EffectiveConfig> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut value: toml::Value = raw
        .parse()
        .map_err(|e| HgError::config(format!("config is not valid TOML: {e}")))?;
    for entry in overrides {
        apply_override(&mut value, entry)?;
    }
    let effective: EffectiveConfig = value
        .try_into()
        .map_err(|e| HgError::config(format!("bad config: {e}")))?;
    effective.model.validate()?;
    Ok(effective)
}

fn apply_override(root: &mut toml::Value, entry: &str) -> anyhow::Result<()> {
    let Some((key, raw_value)) = entry.split_once('=') else {
        bail!(HgError::config(format!(
            "override '{entry}' is not KEY=VALUE"
        )));
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!(HgError::config(format!("override key '{key}' is malformed")));
    }
    // parse the value as TOML, falling back to a plain string
    let parsed: toml::Value = match format!("v = {raw_value}").parse::<toml::Table>() {
        Ok(table) => table["v"].clone(),
        Err(_) => toml::Value::String(raw_value.to_string()),
    };
    let mut cursor = root;
    for part in &parts[..parts.len() - 1] {
        let table = cursor.as_table_mut().ok_or_else(|| {
            HgError::config(format!("override key '{key}' descends into a non-table"))
        })?;
        cursor = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = cursor.as_table_mut().ok_or_else(|| {
        HgError::config(format!("override key '{key}' descends into a non-table"))
    })?;
    table.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}
