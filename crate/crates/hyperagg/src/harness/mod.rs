//! Experiment orchestration: protocols, seeded training loops, metrics, and
//! aggregation into mean +- std summaries.
//!
//! All randomness in one run flows from its seed through labeled streams
//! (init, dropout, sampling, batching, splits), so two runs with the same
//! spec are identical and toggling one randomness consumer never shifts
//! another.

mod gradcheck;
mod grid;
mod metrics;

pub use gradcheck::max_rel_grad_error;
pub use grid::{grid_search, GridReport, GridSpace};
pub use metrics::{accuracy, auroc, mae, mean_std, Metric};

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{HgError, Result};
use crate::graph::{inductive_split, Graph, InductiveMode, Neighborhood};
use crate::models::{forward, supervision, ForwardCtx, Model, ModelConfig, Sampling, Supervision};
use crate::models::{Arch, Task};
use crate::rng::stream;
use crate::tensor::{AdamConfig, AdamState, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Transductive,
    InductiveStrict,
    InductiveProduction,
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Setting::Transductive => "transductive",
            Setting::InductiveStrict => "inductive_strict",
            Setting::InductiveProduction => "inductive_production",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub model: ModelConfig,
    pub setting: Setting,
    pub seeds: Vec<u64>,
    pub max_epochs: usize,
    pub patience: usize,
    pub metric: Metric,
    /// When false the wall-time column is reported as zero, which makes the
    /// CSV output bitwise reproducible.
    pub measure_time: bool,
    /// Worker threads for fanning out seeds; 1 means sequential.
    pub parallel: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            model: ModelConfig::default(),
            setting: Setting::Transductive,
            seeds: vec![0],
            max_epochs: 1000,
            patience: 100,
            metric: Metric::Accuracy,
            measure_time: true,
            parallel: 1,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.seeds.is_empty() {
            return Err(HgError::config("at least one seed is required".to_string()));
        }
        if self.patience > self.max_epochs {
            return Err(HgError::config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if self.parallel == 0 {
            return Err(HgError::config("parallel must be >= 1".to_string()));
        }
        Ok(())
    }
}

/// One seed's outcome.
#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub seed: u64,
    pub best_val_metric: f64,
    pub test_metric: f64,
    pub epochs_run: usize,
    pub wall_seconds: f64,
    /// Divergence diagnostic; a failed run is excluded from the summary.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub included: usize,
    pub failed_seeds: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub runs: Vec<RunResult>,
    pub summary: Summary,
    pub warnings: Vec<String>,
}

impl ExperimentOutput {
    /// `seed,metric,epochs,seconds` rows; failed runs carry `nan`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,metric,epochs,seconds\n");
        for r in &self.runs {
            let metric = if r.failure.is_some() {
                "nan".to_string()
            } else {
                format!("{:.6}", r.test_metric)
            };
            out.push_str(&format!(
                "{},{},{},{:.3}\n",
                r.seed, metric, r.epochs_run, r.wall_seconds
            ));
        }
        out
    }

    /// Full summary with the effective config embedded, so any result file
    /// is reproducible on its own.
    pub fn summary_json(&self, spec: &ExperimentSpec) -> serde_json::Value {
        serde_json::json!({
            "mean": self.summary.mean,
            "std": self.summary.std,
            "config": spec.model,
            "setting": spec.setting,
            "metric": spec.metric,
            "seeds": spec.seeds,
            "max_epochs": spec.max_epochs,
            "patience": spec.patience,
            "included_runs": self.summary.included,
            "failed_seeds": self.summary.failed_seeds,
            "runs": self.runs,
            "warnings": self.warnings,
        })
    }
}

/// The train-time and eval-time graph views for one seed.
struct SeedGraphs {
    train: Graph,
    eval: Graph,
    warnings: Vec<String>,
}

fn build_views(g: &Graph, setting: Setting, seed: u64) -> Result<SeedGraphs> {
    match setting {
        Setting::Transductive => Ok(SeedGraphs {
            train: g.clone(),
            eval: g.clone(),
            warnings: Vec::new(),
        }),
        Setting::InductiveStrict => {
            let split = inductive_split(g, InductiveMode::Strict, &mut stream(seed, "split"))?;
            Ok(SeedGraphs {
                train: split.train_graph,
                eval: split.eval_graph,
                warnings: split.warnings,
            })
        }
        Setting::InductiveProduction => {
            let split = inductive_split(g, InductiveMode::Production, &mut stream(seed, "split"))?;
            Ok(SeedGraphs {
                train: split.train_graph,
                eval: split.eval_graph,
                warnings: split.warnings,
            })
        }
    }
}

/// Applies the config's structural transforms (undirected, self-loops).
pub fn prepare_graph(g: &Graph, config: &ModelConfig) -> Graph {
    let mut out = g.clone();
    if config.undirected {
        out = out.make_undirected();
    }
    if config.self_loops {
        out = out.add_self_loops();
    }
    out
}

fn output_dim(g: &Graph, task: Task) -> Result<usize> {
    match task {
        Task::GraphReg => Ok(1),
        _ => g
            .label_kind
            .num_classes()
            .ok_or_else(|| HgError::config("classification task on a regression dataset".to_string())),
    }
}

fn loss_node(tape: &mut Tape, logits: Var, sup: &Supervision) -> Result<Var> {
    match sup {
        Supervision::Classes { rows, labels } => tape.softmax_cross_entropy(logits, rows, labels),
        Supervision::Values { rows, targets } => tape.mae_loss(logits, rows, targets),
    }
}

fn frozen_samples(
    g: &Graph,
    config: &ModelConfig,
    seed: u64,
) -> Result<HashMap<usize, Neighborhood>> {
    let mut rng = stream(seed, "sample/frozen");
    let mut map = HashMap::with_capacity(g.num_vertices);
    for v in 0..g.num_vertices {
        map.insert(v, g.sample_khop(v, config.k_hop, config.cap(), &mut rng)?);
    }
    Ok(map)
}

/// One optimizer pass over the training mask. Full-batch for GHC/GCN/MLP,
/// minibatched over root vertices with fresh (or frozen) k-hop samples for
/// GHM. Returns the epoch's mean training loss.
pub fn train_epoch(
    model: &mut Model,
    adam: &AdamConfig,
    state: &mut AdamState,
    train_g: &Graph,
    frozen: Option<&HashMap<usize, Neighborhood>>,
    seed: u64,
    epoch: usize,
) -> Result<f64> {
    let task = model.config.task;
    let mut dropout_rng = stream(seed, &format!("dropout/e{epoch}"));

    if model.config.arch == Arch::Ghm && !task.is_graph_level() {
        let sup = supervision(train_g, &train_g.train_mask, task)?;
        let (vertices, labels) = match sup {
            Supervision::Classes { rows, labels } => (rows, labels),
            Supervision::Values { .. } => {
                return Err(HgError::config(
                    "GHM vertex training expects class labels".to_string(),
                ))
            }
        };
        if vertices.is_empty() {
            return Err(HgError::EmptyMask);
        }
        let mut order: Vec<usize> = (0..vertices.len()).collect();
        {
            use rand::seq::SliceRandom;
            order.shuffle(&mut stream(seed, &format!("batch/e{epoch}")));
        }
        let mut sample_rng = stream(seed, &format!("sample/e{epoch}"));
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(model.config.batch_size) {
            let batch: Vec<usize> = chunk.iter().map(|&i| vertices[i]).collect();
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let mut tape = Tape::new();
            let mut ctx = ForwardCtx {
                training: true,
                dropout_rng: &mut dropout_rng,
                sampling: match frozen {
                    Some(map) => Sampling::Frozen(map),
                    None => Sampling::Fresh(&mut sample_rng),
                },
            };
            let logits = forward(&mut tape, model, train_g, Some(&batch), &mut ctx)?;
            let rows: Vec<usize> = (0..batch.len()).collect();
            let loss = tape.softmax_cross_entropy(logits, &rows, &batch_labels)?;
            let loss_value = tape.data(loss)[0];
            if !loss_value.is_finite() {
                return Ok(loss_value);
            }
            tape.backward(loss)?;
            model.params.collect_grads(&tape);
            state.step(&mut model.params, adam)?;
            total += loss_value;
            batches += 1;
        }
        return Ok(total / batches as f64);
    }

    let sup = supervision(train_g, &train_g.train_mask, task)?;
    if sup.is_empty() {
        return Err(HgError::EmptyMask);
    }
    let mut tape = Tape::new();
    let mut ctx = ForwardCtx {
        training: true,
        dropout_rng: &mut dropout_rng,
        sampling: Sampling::None,
    };
    let logits = forward(&mut tape, model, train_g, None, &mut ctx)?;
    let loss = loss_node(&mut tape, logits, &sup)?;
    let loss_value = tape.data(loss)[0];
    if !loss_value.is_finite() {
        return Ok(loss_value);
    }
    tape.backward(loss)?;
    model.params.collect_grads(&tape);
    state.step(&mut model.params, adam)?;
    Ok(loss_value)
}

/// Metric of the model on the masked rows of `g`, inference mode.
pub fn evaluate(
    model: &Model,
    g: &Graph,
    mask: &[bool],
    metric: Metric,
    frozen: Option<&HashMap<usize, Neighborhood>>,
    seed: u64,
) -> Result<f64> {
    let task = model.config.task;
    let mut dropout_rng = stream(seed, "dropout/eval");

    let (logit_data, num_cols, sup) = if model.config.arch == Arch::Ghm && !task.is_graph_level()
    {
        let sup = supervision(g, mask, task)?;
        let (vertices, labels) = match &sup {
            Supervision::Classes { rows, labels } => (rows.clone(), labels.clone()),
            Supervision::Values { .. } => {
                return Err(HgError::config(
                    "GHM vertex evaluation expects class labels".to_string(),
                ))
            }
        };
        if vertices.is_empty() {
            return Err(HgError::EmptyMask);
        }
        let mut sample_rng = stream(seed, "sample/eval");
        let mut tape = Tape::new();
        let mut ctx = ForwardCtx {
            training: false,
            dropout_rng: &mut dropout_rng,
            sampling: match frozen {
                Some(map) => Sampling::Frozen(map),
                None => Sampling::Fresh(&mut sample_rng),
            },
        };
        let logits = forward(&mut tape, model, g, Some(&vertices), &mut ctx)?;
        let (_, c) = tape.shape(logits);
        let rows: Vec<usize> = (0..vertices.len()).collect();
        (
            tape.data(logits).to_vec(),
            c,
            Supervision::Classes { rows, labels },
        )
    } else {
        let sup = supervision(g, mask, task)?;
        if sup.is_empty() {
            return Err(HgError::EmptyMask);
        }
        let mut tape = Tape::new();
        let mut ctx = ForwardCtx {
            training: false,
            dropout_rng: &mut dropout_rng,
            sampling: Sampling::None,
        };
        let logits = forward(&mut tape, model, g, None, &mut ctx)?;
        let (_, c) = tape.shape(logits);
        (tape.data(logits).to_vec(), c, sup)
    };

    match (&sup, metric) {
        (Supervision::Classes { rows, labels }, Metric::Accuracy) => {
            let gathered: Vec<f64> = rows
                .iter()
                .flat_map(|&r| logit_data[r * num_cols..(r + 1) * num_cols].to_vec())
                .collect();
            accuracy(&gathered, num_cols, labels)
        }
        (Supervision::Classes { rows, labels }, Metric::Auroc) => {
            if num_cols != 2 {
                return Err(HgError::config(format!(
                    "auroc needs a two-class head, got {num_cols} outputs"
                )));
            }
            let scores: Vec<f64> = rows
                .iter()
                .map(|&r| logit_data[r * 2 + 1] - logit_data[r * 2])
                .collect();
            auroc(&scores, labels)
        }
        (Supervision::Values { rows, targets }, Metric::Mae) => {
            let preds: Vec<f64> = rows.iter().map(|&r| logit_data[r * num_cols]).collect();
            mae(&preds, targets)
        }
        (Supervision::Values { .. }, m) => Err(HgError::config(format!(
            "metric {m} incompatible with regression targets"
        ))),
        (Supervision::Classes { .. }, Metric::Mae) => Err(HgError::config(
            "mae metric needs regression targets".to_string(),
        )),
    }
}

/// Trains one seed end to end and reports its metrics.
fn run_seed(g: &Graph, spec: &ExperimentSpec, seed: u64) -> Result<(RunResult, Vec<String>)> {
    let start = Instant::now();
    let views = build_views(g, spec.setting, seed)?;
    let in_dim = g.features.cols();
    let out_dim = output_dim(g, spec.model.task)?;
    let mut model = Model::init(spec.model.clone(), in_dim, out_dim, &mut stream(seed, "init"))?;
    let adam = AdamConfig::new(spec.model.lr, spec.model.weight_decay)?;
    let mut state = AdamState::for_params(&model.params);

    let needs_frozen = spec.model.arch == Arch::Ghm
        && !spec.model.task.is_graph_level()
        && spec.model.freeze_sampling;
    let frozen_train = if needs_frozen {
        Some(frozen_samples(&views.train, &spec.model, seed)?)
    } else {
        None
    };
    let frozen_eval = if needs_frozen {
        Some(frozen_samples(&views.eval, &spec.model, seed)?)
    } else {
        None
    };

    let mut best_val = spec.metric.worst();
    let mut best_params = model.params.clone();
    let mut epochs_since_best = 0usize;
    let mut epochs_run = 0usize;

    for epoch in 0..spec.max_epochs {
        let loss = train_epoch(
            &mut model,
            &adam,
            &mut state,
            &views.train,
            frozen_train.as_ref(),
            seed,
            epoch,
        )?;
        epochs_run = epoch + 1;
        if !loss.is_finite() {
            return Ok((
                RunResult {
                    seed,
                    best_val_metric: f64::NAN,
                    test_metric: f64::NAN,
                    epochs_run,
                    wall_seconds: elapsed(start, spec.measure_time),
                    failure: Some(format!("non-finite training loss at epoch {epoch}")),
                },
                views.warnings,
            ));
        }
        let val = evaluate(
            &model,
            &views.eval,
            &views.eval.val_mask,
            spec.metric,
            frozen_eval.as_ref(),
            seed,
        )?;
        if spec.metric.improves(val, best_val) {
            best_val = val;
            best_params = model.params.clone();
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if epochs_since_best >= spec.patience {
                break;
            }
        }
    }

    model.params = best_params;
    let test = evaluate(
        &model,
        &views.eval,
        &views.eval.test_mask,
        spec.metric,
        frozen_eval.as_ref(),
        seed,
    )?;
    Ok((
        RunResult {
            seed,
            best_val_metric: best_val,
            test_metric: test,
            epochs_run,
            wall_seconds: elapsed(start, spec.measure_time),
            failure: None,
        },
        views.warnings,
    ))
}

fn elapsed(start: Instant, measure: bool) -> f64 {
    if measure {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    }
}

/// Runs every seed (optionally fanned across worker threads), aggregates the
/// successful runs, and flags NaN failures instead of retrying them.
pub fn run_experiment(dataset: &Graph, spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    dataset.validate()?;
    let g = prepare_graph(dataset, &spec.model);

    let results: Vec<Result<(RunResult, Vec<String>)>> = if spec.parallel <= 1 {
        spec.seeds
            .iter()
            .map(|&seed| run_seed(&g, spec, seed))
            .collect()
    } else {
        let workers = spec.parallel.min(spec.seeds.len());
        let mut slots: Vec<Option<Result<(RunResult, Vec<String>)>>> =
            (0..spec.seeds.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for w in 0..workers {
                let g = &g;
                let seeds = &spec.seeds;
                handles.push(scope.spawn(move || {
                    let mut local = Vec::new();
                    let mut i = w;
                    while i < seeds.len() {
                        local.push((i, run_seed(g, spec, seeds[i])));
                        i += workers;
                    }
                    local
                }));
            }
            for h in handles {
                for (i, r) in h.join().expect("worker panicked") {
                    slots[i] = Some(r);
                }
            }
        });
        slots.into_iter().map(|s| s.expect("slot filled")).collect()
    };

    let mut runs = Vec::with_capacity(results.len());
    let mut warnings: Vec<String> = Vec::new();
    for r in results {
        let (run, mut w) = r?;
        warnings.append(&mut w);
        runs.push(run);
    }
    warnings.sort();
    warnings.dedup();

    let ok_metrics: Vec<f64> = runs
        .iter()
        .filter(|r| r.failure.is_none())
        .map(|r| r.test_metric)
        .collect();
    let failed_seeds: Vec<u64> = runs
        .iter()
        .filter(|r| r.failure.is_some())
        .map(|r| r.seed)
        .collect();
    let (mean, std) = mean_std(&ok_metrics);
    Ok(ExperimentOutput {
        runs,
        summary: Summary {
            mean,
            std,
            included: ok_metrics.len(),
            failed_seeds,
        },
        warnings,
    })
}

/// Edge homophily of the dataset after a config's structural transforms;
/// convenience for reporting.
pub fn dataset_homophily(g: &Graph, config: &ModelConfig) -> f64 {
    prepare_graph(g, config).edge_homophily()
}

// re-export label helper for tests that construct datasets by hand
pub use crate::graph::LabelKind;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, Label, SbmConfig};
    use crate::models::Readout;

    fn sbm_small(seed: u64) -> Graph {
        generate_sbm(
            &SbmConfig {
                num_vertices: 240,
                classes: 2,
                p_in: 0.08,
                p_out: 0.01,
                feat_dim: 4,
                noise: 0.5,
            },
            &mut stream(seed, "data"),
        )
        .unwrap()
    }

    fn quick_spec(arch: Arch) -> ExperimentSpec {
        ExperimentSpec {
            model: ModelConfig {
                arch,
                depth: 1,
                hidden: 8,
                mixing: 4,
                model_dropout: 0.2,
                lr: 0.01,
                weight_decay: 0.0,
                readout: Readout::Root,
                ..Default::default()
            },
            seeds: vec![0, 1],
            max_epochs: 15,
            patience: 15,
            metric: Metric::Accuracy,
            measure_time: false,
            parallel: 1,
            setting: Setting::Transductive,
        }
    }

    #[test]
    fn loss_decreases_over_first_epochs() {
        let g = sbm_small(11);
        let spec = quick_spec(Arch::Ghc);
        let prepared = prepare_graph(&g, &spec.model);
        let mut model = Model::init(spec.model.clone(), 4, 2, &mut stream(0, "init")).unwrap();
        let adam = AdamConfig::new(0.01, 0.0).unwrap();
        let mut state = AdamState::for_params(&model.params);
        let mut losses = Vec::new();
        for epoch in 0..10 {
            losses.push(
                train_epoch(&mut model, &adam, &mut state, &prepared, None, 0, epoch).unwrap(),
            );
        }
        assert!(
            losses[9] < losses[0],
            "loss did not decrease: {losses:?}"
        );
    }

    #[test]
    fn masked_loss_ignores_val_and_test_labels() {
        let g = sbm_small(13);
        let spec = quick_spec(Arch::Ghc);
        let prepared = prepare_graph(&g, &spec.model);

        let run = |graph: &Graph| -> f64 {
            let mut model =
                Model::init(spec.model.clone(), 4, 2, &mut stream(7, "init")).unwrap();
            let adam = AdamConfig::new(0.01, 0.0).unwrap();
            let mut state = AdamState::for_params(&model.params);
            train_epoch(&mut model, &adam, &mut state, graph, None, 7, 0).unwrap()
        };

        let base = run(&prepared);
        let mut flipped = prepared.clone();
        for v in 0..flipped.num_vertices {
            if !flipped.train_mask[v] {
                if let Label::Class(c) = flipped.labels[v] {
                    flipped.labels[v] = Label::Class(1 - c);
                }
            }
        }
        let after = run(&flipped);
        assert_eq!(base, after);
    }

    #[test]
    fn seed_determinism_full_experiment() {
        let g = sbm_small(17);
        let spec = quick_spec(Arch::Gcn);
        let a = run_experiment(&g, &spec).unwrap();
        let b = run_experiment(&g, &spec).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.summary.mean, b.summary.mean);
    }

    #[test]
    fn parallel_matches_sequential() {
        let g = sbm_small(19);
        let mut spec = quick_spec(Arch::Mlp);
        spec.seeds = vec![0, 1, 2, 3];
        let seq = run_experiment(&g, &spec).unwrap();
        spec.parallel = 3;
        let par = run_experiment(&g, &spec).unwrap();
        assert_eq!(seq.to_csv(), par.to_csv());
    }

    #[test]
    fn strict_training_never_reads_poisoned_non_train_data() {
        let g = sbm_small(23);
        let spec = ExperimentSpec {
            setting: Setting::InductiveStrict,
            ..quick_spec(Arch::Ghc)
        };
        let prepared = prepare_graph(&g, &spec.model);
        let mut poisoned = prepared.clone();
        let cols = poisoned.features.cols();
        for v in 0..poisoned.num_vertices {
            if !poisoned.train_mask[v] {
                let row = &mut poisoned.features.data_mut()[v * cols..(v + 1) * cols];
                row.iter_mut().for_each(|x| *x = f64::NAN);
                poisoned.labels[v] = Label::Unknown;
            }
        }
        let views = build_views(&poisoned, Setting::InductiveStrict, 0).unwrap();
        let mut model = Model::init(spec.model.clone(), 4, 2, &mut stream(0, "init")).unwrap();
        let adam = AdamConfig::new(0.01, 0.0).unwrap();
        let mut state = AdamState::for_params(&model.params);
        for epoch in 0..3 {
            let loss =
                train_epoch(&mut model, &adam, &mut state, &views.train, None, 0, epoch).unwrap();
            assert!(loss.is_finite(), "NaN leaked into strict training");
        }
    }

    #[test]
    fn failed_runs_are_flagged_and_excluded() {
        let g = sbm_small(29);
        let mut spec = quick_spec(Arch::Mlp);
        // absurd learning rate: two stacked layers square the magnitude
        // past f64 range within a step or two
        spec.model.lr = 1e155;
        spec.model.depth = 2;
        spec.model.model_dropout = 0.0;
        spec.seeds = vec![0];
        spec.max_epochs = 30;
        spec.patience = 30;
        let out = run_experiment(&g, &spec).unwrap();
        assert_eq!(out.summary.failed_seeds, vec![0]);
        assert_eq!(out.summary.included, 0);
        assert!(out.runs[0].failure.is_some());
    }

    #[test]
    fn evaluate_rejects_empty_mask() {
        let g = sbm_small(31);
        let spec = quick_spec(Arch::Mlp);
        let model = Model::init(spec.model.clone(), 4, 2, &mut stream(0, "init")).unwrap();
        let empty = vec![false; g.num_vertices];
        assert!(matches!(
            evaluate(&model, &g, &empty, Metric::Accuracy, None, 0),
            Err(HgError::EmptyMask)
        ));
    }

    #[test]
    fn ghm_trains_and_evaluates() {
        let g = sbm_small(37);
        let mut spec = quick_spec(Arch::Ghm);
        spec.model.k_hop = 1;
        spec.model.subgraph_cap = 12;
        spec.model.batch_size = 16;
        spec.seeds = vec![0];
        spec.max_epochs = 3;
        spec.patience = 3;
        let out = run_experiment(&g, &spec).unwrap();
        assert!(out.runs[0].failure.is_none());
        assert!(out.runs[0].test_metric >= 0.0 && out.runs[0].test_metric <= 1.0);
    }

    #[test]
    fn auroc_evaluation_on_binary_task() {
        let g = sbm_small(43);
        let mut spec = quick_spec(Arch::Gcn);
        spec.metric = Metric::Auroc;
        spec.max_epochs = 10;
        spec.patience = 10;
        spec.seeds = vec![0];
        let out = run_experiment(&g, &spec).unwrap();
        let run = &out.runs[0];
        assert!(run.failure.is_none());
        assert!(run.test_metric > 0.5 && run.test_metric <= 1.0);
    }

    #[test]
    fn summary_matches_direct_recomputation() {
        let g = sbm_small(47);
        let mut spec = quick_spec(Arch::Mlp);
        spec.seeds = vec![0, 1, 2];
        let out = run_experiment(&g, &spec).unwrap();
        let vals: Vec<f64> = out.runs.iter().map(|r| r.test_metric).collect();
        let (mean, std) = mean_std(&vals);
        assert_eq!(out.summary.mean, mean);
        assert_eq!(out.summary.std, std);
    }

    #[test]
    fn test_labels_touched_only_for_the_final_metric() {
        // flipping test labels must change nothing but the test metric
        let g = sbm_small(53);
        let spec = quick_spec(Arch::Gcn);
        let base = run_experiment(&g, &spec).unwrap();

        let mut flipped = g.clone();
        for v in 0..flipped.num_vertices {
            if flipped.test_mask[v] {
                if let Label::Class(c) = flipped.labels[v] {
                    flipped.labels[v] = Label::Class(1 - c);
                }
            }
        }
        let other = run_experiment(&flipped, &spec).unwrap();
        for (a, b) in base.runs.iter().zip(&other.runs) {
            assert_eq!(a.best_val_metric, b.best_val_metric);
            assert_eq!(a.epochs_run, b.epochs_run);
            assert!((a.test_metric - (1.0 - b.test_metric)).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_sampling_is_deterministic_per_seed() {
        let g = sbm_small(41);
        let mut spec = quick_spec(Arch::Ghm);
        spec.model.freeze_sampling = true;
        spec.model.k_hop = 1;
        spec.model.batch_size = 16;
        spec.seeds = vec![5];
        spec.max_epochs = 2;
        spec.patience = 2;
        let a = run_experiment(&g, &spec).unwrap();
        let b = run_experiment(&g, &spec).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }
}
