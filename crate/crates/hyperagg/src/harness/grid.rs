//! Two-step grid search: architectural knobs first with reduced repeats and
//! a small fixed regularization grid, then dropout/weight-decay around the
//! stage-one winner. Selection is by mean validation metric throughout.

use crate::error::Result;
use crate::graph::Graph;
use crate::harness::{run_experiment, ExperimentSpec};
use crate::models::{ModelConfig, Readout};

/// Candidate values per knob; an empty axis keeps the base config's value.
#[derive(Debug, Clone, Default)]
pub struct GridSpace {
    pub depth: Vec<usize>,
    pub hidden: Vec<usize>,
    pub mixing: Vec<usize>,
    pub lr: Vec<f64>,
    pub undirected: Vec<bool>,
    pub self_loops: Vec<bool>,
    pub root_connection: Vec<bool>,
    pub residual: Vec<bool>,
    pub readout: Vec<Readout>,
    /// Reduced regularization candidates used during stage one.
    pub stage1_dropout: Vec<f64>,
    pub stage1_weight_decay: Vec<f64>,
    /// How many of the spec's seeds stage one uses (at least 1).
    pub stage1_seed_count: usize,
    pub input_dropout: Vec<f64>,
    pub model_dropout: Vec<f64>,
    pub mixing_dropout: Vec<f64>,
    pub weight_decay: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GridPoint {
    pub config: ModelConfig,
    pub val_mean: f64,
    pub stage: u8,
}

#[derive(Debug, Clone)]
pub struct GridReport {
    pub evaluated: Vec<GridPoint>,
    pub best: ModelConfig,
    pub best_val: f64,
}

fn axis<T: Clone>(vals: &[T], default: T) -> Vec<T> {
    if vals.is_empty() {
        vec![default]
    } else {
        vals.to_vec()
    }
}

fn val_mean(g: &Graph, spec: &ExperimentSpec) -> Result<f64> {
    let out = run_experiment(g, spec)?;
    let vals: Vec<f64> = out
        .runs
        .iter()
        .filter(|r| r.failure.is_none())
        .map(|r| r.best_val_metric)
        .collect();
    if vals.is_empty() {
        return Ok(spec.metric.worst());
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Architectural fields that stage two must not touch.
fn arch_fields(c: &ModelConfig) -> impl PartialEq + std::fmt::Debug {
    (
        c.arch,
        c.depth,
        c.hidden,
        c.mixing,
        c.lr.to_bits(),
        c.undirected,
        c.self_loops,
        c.root_connection,
        c.residual,
        c.readout,
    )
}

pub fn grid_search(g: &Graph, base: &ExperimentSpec, space: &GridSpace) -> Result<GridReport> {
    base.validate()?;
    let b = &base.model;
    let mut evaluated = Vec::new();

    // stage 1: architectural sweep, reduced repeats, coarse regularization
    let stage1_seeds: Vec<u64> = {
        let count = space.stage1_seed_count.max(1).min(base.seeds.len());
        base.seeds[..count].to_vec()
    };
    let mut best1: Option<(ModelConfig, f64)> = None;
    for &depth in &axis(&space.depth, b.depth) {
        for &hidden in &axis(&space.hidden, b.hidden) {
            for &mixing in &axis(&space.mixing, b.mixing) {
                for &lr in &axis(&space.lr, b.lr) {
                    for &undirected in &axis(&space.undirected, b.undirected) {
                        for &self_loops in &axis(&space.self_loops, b.self_loops) {
                            for &root in &axis(&space.root_connection, b.root_connection) {
                                for &residual in &axis(&space.residual, b.residual) {
                                    for &readout in &axis(&space.readout, b.readout) {
                                        for &drop in &axis(&space.stage1_dropout, b.model_dropout)
                                        {
                                            for &wd in &axis(
                                                &space.stage1_weight_decay,
                                                b.weight_decay,
                                            ) {
                                                let config = ModelConfig {
                                                    depth,
                                                    hidden,
                                                    mixing,
                                                    lr,
                                                    undirected,
                                                    self_loops,
                                                    root_connection: root,
                                                    residual,
                                                    readout,
                                                    model_dropout: drop,
                                                    weight_decay: wd,
                                                    ..b.clone()
                                                };
                                                let spec = ExperimentSpec {
                                                    model: config.clone(),
                                                    seeds: stage1_seeds.clone(),
                                                    ..base.clone()
                                                };
                                                let score = val_mean(g, &spec)?;
                                                evaluated.push(GridPoint {
                                                    config: config.clone(),
                                                    val_mean: score,
                                                    stage: 1,
                                                });
                                                let better = match &best1 {
                                                    None => true,
                                                    Some((_, incumbent)) => base
                                                        .metric
                                                        .improves(score, *incumbent),
                                                };
                                                if better {
                                                    best1 = Some((config, score));
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let (winner, winner_score) = best1.expect("grid has at least one point");

    // stage 2: regularization sweep around the winner, full repeats
    let mut best2 = (winner.clone(), winner_score);
    let mut best2_evaluated = false;
    for &input_dropout in &axis(&space.input_dropout, winner.input_dropout) {
        for &model_dropout in &axis(&space.model_dropout, winner.model_dropout) {
            for &mixing_dropout in &axis(&space.mixing_dropout, winner.mixing_dropout) {
                for &weight_decay in &axis(&space.weight_decay, winner.weight_decay) {
                    let config = ModelConfig {
                        input_dropout,
                        model_dropout,
                        mixing_dropout,
                        weight_decay,
                        ..winner.clone()
                    };
                    debug_assert_eq!(arch_fields(&config), arch_fields(&winner));
                    let spec = ExperimentSpec {
                        model: config.clone(),
                        ..base.clone()
                    };
                    let score = val_mean(g, &spec)?;
                    evaluated.push(GridPoint {
                        config: config.clone(),
                        val_mean: score,
                        stage: 2,
                    });
                    if !best2_evaluated || base.metric.improves(score, best2.1) {
                        best2 = (config, score);
                        best2_evaluated = true;
                    }
                }
            }
        }
    }

    Ok(GridReport {
        evaluated,
        best: best2.0,
        best_val: best2.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, SbmConfig};
    use crate::harness::{Metric, Setting};
    use crate::models::Arch;
    use crate::rng::stream;

    fn tiny_setup() -> (Graph, ExperimentSpec) {
        let g = generate_sbm(
            &SbmConfig {
                num_vertices: 220,
                classes: 2,
                p_in: 0.08,
                p_out: 0.01,
                feat_dim: 4,
                noise: 0.5,
            },
            &mut stream(3, "grid-data"),
        )
        .unwrap();
        let spec = ExperimentSpec {
            model: ModelConfig {
                arch: Arch::Mlp,
                depth: 1,
                hidden: 8,
                model_dropout: 0.1,
                weight_decay: 0.0,
                ..Default::default()
            },
            seeds: vec![0, 1],
            max_epochs: 8,
            patience: 8,
            metric: Metric::Accuracy,
            measure_time: false,
            parallel: 1,
            setting: Setting::Transductive,
        };
        (g, spec)
    }

    #[test]
    fn singleton_space_returns_base_config() {
        let (g, spec) = tiny_setup();
        let report = grid_search(&g, &spec, &GridSpace::default()).unwrap();
        assert_eq!(report.best, spec.model);
        assert_eq!(report.evaluated.len(), 2); // one stage-1 + one stage-2 point
    }

    #[test]
    fn stage2_keeps_architecture_and_best_dominates() {
        let (g, spec) = tiny_setup();
        let space = GridSpace {
            hidden: vec![4, 8],
            stage1_seed_count: 1,
            model_dropout: vec![0.0, 0.2],
            ..Default::default()
        };
        let report = grid_search(&g, &spec, &space).unwrap();
        let stage2: Vec<_> = report.evaluated.iter().filter(|p| p.stage == 2).collect();
        assert!(!stage2.is_empty());
        let winner_hidden = report.best.hidden;
        for p in &stage2 {
            assert_eq!(p.config.hidden, winner_hidden);
            assert_eq!(p.config.depth, report.best.depth);
        }
        // returned config's score >= every evaluated stage-2 score
        for p in stage2 {
            assert!(report.best_val >= p.val_mean - 1e-12);
        }
    }
}
