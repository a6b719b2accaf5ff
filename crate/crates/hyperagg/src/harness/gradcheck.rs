//! Finite-difference verification of the tape gradients on a full model.

use crate::error::{HgError, Result};
use crate::graph::Graph;
use crate::models::{forward, supervision, Arch, ForwardCtx, Model, Sampling, Supervision};
use crate::oracles;
use crate::rng::stream;
use crate::tensor::Tape;

fn loss_once(model: &Model, g: &Graph, seed: u64, collect: bool) -> Result<(f64, Option<Vec<f64>>)> {
    let mask = vec![true; g.num_vertices];
    let sup = supervision(g, &mask, model.config.task)?;
    if sup.is_empty() {
        return Err(HgError::EmptyMask);
    }
    let mut dropout_rng = stream(seed, "gc/dropout");
    let mut sample_rng = stream(seed, "gc/sample");
    let mut tape = Tape::new();

    let loss = if model.config.arch == Arch::Ghm && !model.config.task.is_graph_level() {
        let (vertices, labels) = match &sup {
            Supervision::Classes { rows, labels } => (rows.clone(), labels.clone()),
            Supervision::Values { .. } => {
                return Err(HgError::config(
                    "gradient check on GHM expects class labels".to_string(),
                ))
            }
        };
        let mut ctx = ForwardCtx {
            training: true,
            dropout_rng: &mut dropout_rng,
            sampling: Sampling::Fresh(&mut sample_rng),
        };
        let logits = forward(&mut tape, model, g, Some(&vertices), &mut ctx)?;
        let rows: Vec<usize> = (0..vertices.len()).collect();
        tape.softmax_cross_entropy(logits, &rows, &labels)?
    } else {
        let mut ctx = ForwardCtx {
            training: true,
            dropout_rng: &mut dropout_rng,
            sampling: Sampling::None,
        };
        let logits = forward(&mut tape, model, g, None, &mut ctx)?;
        match &sup {
            Supervision::Classes { rows, labels } => {
                tape.softmax_cross_entropy(logits, rows, labels)?
            }
            Supervision::Values { rows, targets } => tape.mae_loss(logits, rows, targets)?,
        }
    };

    let value = tape.data(loss)[0];
    if !collect {
        return Ok((value, None));
    }
    tape.backward(loss)?;
    let mut scratch = model.clone();
    scratch.params.collect_grads(&tape);
    Ok((value, Some(scratch.params.flatten_grads())))
}

/// Max relative error between the tape gradient and central finite
/// differences over every trainable scalar. Training-mode paths (dropout
/// masks, norms) are exercised; all stochastic draws are replayed from the
/// same labeled streams on every probe, so the loss is a deterministic
/// function of the parameters.
///
/// `corrupt` deliberately damages one analytic gradient entry first — a
/// negative control for the checker itself.
pub fn max_rel_grad_error(
    model: &Model,
    g: &Graph,
    seed: u64,
    eps: f64,
    corrupt: bool,
) -> Result<f64> {
    let theta = model.params.flatten();
    let (_, grads) = loss_once(model, g, seed, true)?;
    let mut analytic = grads.expect("gradients requested");
    if corrupt {
        if let Some(first) = analytic.first_mut() {
            *first += 0.5;
        }
    }

    let mut probe = model.clone();
    let fd = oracles::fd_gradient(
        |t| {
            probe
                .params
                .set_from_flat(t)
                .expect("flat vector matches parameter shape");
            loss_once(&probe, g, seed, false)
                .map(|(v, _)| v)
                .unwrap_or(f64::NAN)
        },
        &theta,
        eps,
    )?;

    let mut worst = 0.0f64;
    for (a, b) in analytic.iter().zip(&fd) {
        let denom = a.abs().max(b.abs()).max(1e-6);
        worst = worst.max((a - b).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Graph, Label, LabelKind};
    use crate::models::ModelConfig;
    use crate::tensor::Matrix;

    fn six_vertex_graph(seed: u64) -> Graph {
        use rand::Rng;
        let mut rng = stream(seed, "gcgraph");
        let n = 6;
        let mut edges = Vec::new();
        for s in 0..n {
            for d in 0..n {
                if s != d && rng.gen::<f64>() < 0.4 {
                    edges.push((s, d));
                }
            }
        }
        let labels = (0..n).map(|v| Label::Class(v % 3)).collect();
        Graph::build(
            n,
            &edges,
            Matrix::glorot(n, 4, &mut rng),
            labels,
            LabelKind::Classes(3),
        )
        .unwrap()
        .make_undirected()
        .add_self_loops()
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let g = six_vertex_graph(3);
        let cfg = ModelConfig {
            arch: Arch::Mlp,
            depth: 2,
            hidden: 4,
            mixing: 3,
            model_dropout: 0.3,
            input_dropout: 0.2,
            ..Default::default()
        };
        let model = Model::init(cfg, 4, 3, &mut stream(1, "init")).unwrap();
        let err = max_rel_grad_error(&model, &g, 9, 1e-5, false).unwrap();
        assert!(err < 1e-4, "max rel err {err}");
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let g = six_vertex_graph(5);
        let cfg = ModelConfig {
            arch: Arch::Mlp,
            depth: 1,
            hidden: 4,
            ..Default::default()
        };
        let model = Model::init(cfg, 4, 3, &mut stream(1, "init")).unwrap();
        let err = max_rel_grad_error(&model, &g, 9, 1e-5, true).unwrap();
        assert!(err > 1e-2, "corruption went unnoticed: {err}");
    }
}
