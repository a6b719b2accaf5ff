//! Stochastic block model generator with a controllable homophily axis.
//!
//! p_in > p_out gives homophilic graphs, p_in < p_out heterophilic. Features
//! are a one-hot class signal corrupted by Gaussian noise, and the masks
//! follow the 20-per-class train / 30-per-class validation recipe.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{HgError, Result};
use crate::graph::{Graph, Label, LabelKind};
use crate::tensor::Matrix;

pub const TRAIN_PER_CLASS: usize = 20;
pub const VAL_PER_CLASS: usize = 30;

#[derive(Debug, Clone)]
pub struct SbmConfig {
    pub num_vertices: usize,
    pub classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feat_dim: usize,
    pub noise: f64,
}

impl SbmConfig {
    fn check(&self) -> Result<()> {
        if self.classes == 0 || self.num_vertices == 0 {
            return Err(HgError::config("sbm needs vertices and classes".to_string()));
        }
        for (name, p) in [("p_in", self.p_in), ("p_out", self.p_out)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(HgError::config(format!("{name} must be in [0,1], got {p}")));
            }
        }
        if self.feat_dim < self.classes {
            return Err(HgError::config(format!(
                "feat_dim {} cannot hold a one-hot signal for {} classes",
                self.feat_dim, self.classes
            )));
        }
        let smallest_block = self.num_vertices / self.classes;
        if smallest_block < TRAIN_PER_CLASS + VAL_PER_CLASS {
            return Err(HgError::config(format!(
                "blocks of ~{} vertices are too small for {} train + {} val per class",
                smallest_block, TRAIN_PER_CLASS, VAL_PER_CLASS
            )));
        }
        Ok(())
    }
}

/// Undirected SBM graph with equal blocks (the first `n % classes` blocks
/// take the remainder).
pub fn generate_sbm(cfg: &SbmConfig, rng: &mut impl Rng) -> Result<Graph> {
    cfg.check()?;
    let n = cfg.num_vertices;
    let c = cfg.classes;

    // contiguous equal blocks
    let base = n / c;
    let rem = n % c;
    let mut class_of = Vec::with_capacity(n);
    for b in 0..c {
        let size = base + usize::from(b < rem);
        class_of.extend(std::iter::repeat(b).take(size));
    }

    let mut edges = Vec::new();
    for u in 0..n {
        for w in (u + 1)..n {
            let p = if class_of[u] == class_of[w] {
                cfg.p_in
            } else {
                cfg.p_out
            };
            if rng.gen::<f64>() < p {
                edges.push((u, w));
                edges.push((w, u));
            }
        }
    }

    let mut fdata = vec![0.0; n * cfg.feat_dim];
    for v in 0..n {
        fdata[v * cfg.feat_dim + class_of[v]] = 1.0;
        for j in 0..cfg.feat_dim {
            let z: f64 = StandardNormal.sample(rng);
            fdata[v * cfg.feat_dim + j] += cfg.noise * z;
        }
    }
    let features = Matrix::from_vec(n, cfg.feat_dim, fdata)?;
    let labels: Vec<Label> = class_of.iter().map(|&b| Label::Class(b)).collect();

    let mut g = Graph::build(n, &edges, features, labels, LabelKind::Classes(c))?;

    for class in 0..c {
        let mut pool: Vec<usize> = (0..n).filter(|&v| class_of[v] == class).collect();
        pool.shuffle(rng);
        for (i, &v) in pool.iter().enumerate() {
            if i < TRAIN_PER_CLASS {
                g.train_mask[v] = true;
            } else if i < TRAIN_PER_CLASS + VAL_PER_CLASS {
                g.val_mask[v] = true;
            } else {
                g.test_mask[v] = true;
            }
        }
    }
    Ok(g)
}
