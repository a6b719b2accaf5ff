//! Graph storage (CSR) and structural transforms.
//!
//! Graphs are immutable after construction; every transform returns a fresh
//! value. CSR rows keep their targets sorted ascending and deduplicated, so
//! all downstream iteration is order-deterministic.

mod format;
mod sbm;

pub use format::{load_graph, save_graph};
pub use sbm::{generate_sbm, SbmConfig};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{HgError, Result};
use crate::tensor::Matrix;

/// Per-vertex (or per-graph) supervision target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Label {
    Class(usize),
    Value(f64),
    Unknown,
}

impl Label {
    pub fn class(&self) -> Option<usize> {
        match self {
            Label::Class(c) => Some(*c),
            _ => None,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Label::Value(v) => Some(*v),
            _ => None,
        }
    }
}

/// What kind of targets the dataset carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Classes(usize),
    Regression,
}

impl LabelKind {
    pub fn num_classes(&self) -> Option<usize> {
        match self {
            LabelKind::Classes(c) => Some(*c),
            LabelKind::Regression => None,
        }
    }
}

/// CSR graph with features, labels, and split masks. Optionally partitioned
/// into member graphs for graph-level datasets (no edge may cross two
/// members).
#[derive(Debug, Clone)]
pub struct Graph {
    pub num_vertices: usize,
    pub offsets: Vec<usize>,
    pub targets: Vec<usize>,
    pub features: Matrix,
    pub labels: Vec<Label>,
    pub label_kind: LabelKind,
    pub train_mask: Vec<bool>,
    pub val_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
    pub observed_mask: Vec<bool>,
    pub graph_ids: Option<Vec<usize>>,
    pub graph_targets: Option<Vec<Label>>,
}

/// Index list of vertices aggregated together for one target vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighborhood {
    pub root: usize,
    pub members: Vec<usize>,
    /// Position of `root` within `members`.
    pub root_pos: usize,
}

impl Graph {
    /// Builds canonical CSR from a directed edge list (duplicates collapse).
    pub fn build(
        num_vertices: usize,
        edges: &[(usize, usize)],
        features: Matrix,
        labels: Vec<Label>,
        label_kind: LabelKind,
    ) -> Result<Graph> {
        if features.rows() != num_vertices {
            return Err(HgError::data(format!(
                "feature matrix has {} rows for {} vertices",
                features.rows(),
                num_vertices
            )));
        }
        if labels.len() != num_vertices {
            return Err(HgError::data(format!(
                "label vector has {} entries for {} vertices",
                labels.len(),
                num_vertices
            )));
        }
        let (offsets, targets) = canonical_csr(num_vertices, edges)?;
        Ok(Graph {
            num_vertices,
            offsets,
            targets,
            features,
            labels,
            label_kind,
            train_mask: vec![false; num_vertices],
            val_mask: vec![false; num_vertices],
            test_mask: vec![false; num_vertices],
            observed_mask: vec![false; num_vertices],
            graph_ids: None,
            graph_targets: None,
        })
    }

    pub fn num_edges(&self) -> usize {
        self.targets.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::with_capacity(self.num_edges());
        for src in 0..self.num_vertices {
            for &dst in self.neighbors(src) {
                edges.push((src, dst));
            }
        }
        edges
    }

    /// Checks the structural invariants; used after IO and by tests.
    pub fn validate(&self) -> Result<()> {
        if self.offsets.len() != self.num_vertices + 1 {
            return Err(HgError::data("offsets length mismatch".to_string()));
        }
        if self.offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(HgError::data("offsets not nondecreasing".to_string()));
        }
        if *self.offsets.last().unwrap_or(&0) != self.targets.len() {
            return Err(HgError::data("offsets do not cover targets".to_string()));
        }
        if self.targets.iter().any(|&t| t >= self.num_vertices) {
            return Err(HgError::data("edge target out of range".to_string()));
        }
        for v in 0..self.num_vertices {
            let disjoint = [self.train_mask[v], self.val_mask[v], self.test_mask[v]]
                .iter()
                .filter(|&&b| b)
                .count()
                <= 1;
            if !disjoint {
                return Err(HgError::data(format!(
                    "vertex {v} is in more than one of train/val/test"
                )));
            }
        }
        if let Some(ids) = &self.graph_ids {
            if ids.len() != self.num_vertices {
                return Err(HgError::data("graph_ids length mismatch".to_string()));
            }
            for (src, dst) in self.edge_list() {
                if ids[src] != ids[dst] {
                    return Err(HgError::data(format!(
                        "edge {src}->{dst} crosses member graphs {} and {}",
                        ids[src], ids[dst]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of member graphs (1 when the dataset is a single graph).
    pub fn num_member_graphs(&self) -> usize {
        match &self.graph_ids {
            Some(ids) => ids.iter().max().map_or(0, |m| m + 1),
            None => 1,
        }
    }

    /// Edge set closed under reversal; self-loops untouched.
    pub fn make_undirected(&self) -> Graph {
        let mut edges = self.edge_list();
        edges.extend(self.edge_list().iter().map(|&(s, d)| (d, s)));
        let (offsets, targets) =
            canonical_csr(self.num_vertices, &edges).expect("edges already validated");
        Graph {
            offsets,
            targets,
            ..self.clone()
        }
    }

    /// Every vertex ends up with exactly one self-edge.
    pub fn add_self_loops(&self) -> Graph {
        let mut edges = self.edge_list();
        edges.extend((0..self.num_vertices).map(|v| (v, v)));
        let (offsets, targets) =
            canonical_csr(self.num_vertices, &edges).expect("edges already validated");
        Graph {
            offsets,
            targets,
            ..self.clone()
        }
    }

    pub fn remove_self_loops(&self) -> Graph {
        let edges: Vec<(usize, usize)> = self
            .edge_list()
            .into_iter()
            .filter(|&(s, d)| s != d)
            .collect();
        let (offsets, targets) =
            canonical_csr(self.num_vertices, &edges).expect("edges already validated");
        Graph {
            offsets,
            targets,
            ..self.clone()
        }
    }

    /// Direct neighbors of `v`, with `v` itself appended when absent so the
    /// aggregation never sees an empty neighborhood.
    pub fn neighborhood_1hop(&self, v: usize) -> Neighborhood {
        let mut members = self.neighbors(v).to_vec();
        let root_pos = match members.iter().position(|&u| u == v) {
            Some(pos) => pos,
            None => {
                members.push(v);
                members.len() - 1
            }
        };
        Neighborhood {
            root: v,
            members,
            root_pos,
        }
    }

    /// Breadth-first expansion from `v` to depth `k`, capped at `cap` total
    /// members. When a frontier would overflow the cap, it is sampled
    /// uniformly without replacement to fill exactly `cap`. The root is
    /// always member 0.
    pub fn sample_khop(
        &self,
        v: usize,
        k: usize,
        cap: usize,
        rng: &mut impl Rng,
    ) -> Result<Neighborhood> {
        if k < 1 {
            return Err(HgError::config("sample_khop requires k >= 1".to_string()));
        }
        if cap < 1 {
            return Err(HgError::config("sample_khop requires cap >= 1".to_string()));
        }
        let mut members = vec![v];
        let mut visited = vec![false; self.num_vertices];
        visited[v] = true;
        let mut frontier = vec![v];
        for _ in 0..k {
            if members.len() >= cap {
                break;
            }
            let mut next = Vec::new();
            for &u in &frontier {
                for &w in self.neighbors(u) {
                    if !visited[w] {
                        visited[w] = true;
                        next.push(w);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            let room = cap - members.len();
            if next.len() > room {
                // uniform without replacement from the overflowing frontier
                let mut pool = next;
                pool.shuffle(rng);
                pool.truncate(room);
                pool.sort_unstable();
                members.extend_from_slice(&pool);
                break;
            }
            members.extend_from_slice(&next);
            frontier = next;
        }
        Ok(Neighborhood {
            root: v,
            members,
            root_pos: 0,
        })
    }

    /// Induced subgraph on the kept vertices. Returns the new graph plus the
    /// mapping from new vertex ids to original ids.
    pub fn induced_subgraph(&self, keep: &[bool]) -> Result<(Graph, Vec<usize>)> {
        if keep.len() != self.num_vertices {
            return Err(HgError::data("keep mask length mismatch".to_string()));
        }
        let map: Vec<usize> = (0..self.num_vertices).filter(|&v| keep[v]).collect();
        let mut inverse = vec![usize::MAX; self.num_vertices];
        for (new, &old) in map.iter().enumerate() {
            inverse[old] = new;
        }
        let n = map.len();
        let mut edges = Vec::new();
        for &old_src in &map {
            for &old_dst in self.neighbors(old_src) {
                if keep[old_dst] {
                    edges.push((inverse[old_src], inverse[old_dst]));
                }
            }
        }
        let feat_dim = self.features.cols();
        let mut fdata = Vec::with_capacity(n * feat_dim);
        for &old in &map {
            fdata.extend_from_slice(self.features.row(old));
        }
        let features = Matrix::from_vec(n, feat_dim, fdata)?;
        let pick = |mask: &[bool]| map.iter().map(|&old| mask[old]).collect::<Vec<bool>>();
        let mut g = Graph::build(
            n,
            &edges,
            features,
            map.iter().map(|&old| self.labels[old]).collect(),
            self.label_kind,
        )?;
        g.train_mask = pick(&self.train_mask);
        g.val_mask = pick(&self.val_mask);
        g.test_mask = pick(&self.test_mask);
        g.observed_mask = pick(&self.observed_mask);
        g.graph_ids = self
            .graph_ids
            .as_ref()
            .map(|ids| map.iter().map(|&old| ids[old]).collect());
        g.graph_targets = self.graph_targets.clone();
        Ok((g, map))
    }

    /// Fraction of non-loop edges whose endpoints share a class.
    pub fn edge_homophily(&self) -> f64 {
        let mut same = 0usize;
        let mut total = 0usize;
        for (src, dst) in self.edge_list() {
            if src == dst {
                continue;
            }
            if let (Label::Class(a), Label::Class(b)) = (self.labels[src], self.labels[dst]) {
                total += 1;
                if a == b {
                    same += 1;
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            same as f64 / total as f64
        }
    }
}

/// How much of the graph is hidden while training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InductiveMode {
    /// Only training vertices and the edges between them are available.
    Strict,
    /// 80% of the test vertices become unlabeled-but-visible during
    /// training; the remaining 20% stay held out.
    Production,
}

/// Output of `inductive_split`.
#[derive(Debug, Clone)]
pub struct InductiveSplit {
    pub train_graph: Graph,
    /// New-to-original vertex id mapping for the training graph.
    pub train_vertex_map: Vec<usize>,
    /// Full graph used at evaluation time; in production mode its test mask
    /// is the held-out 20% and the observed mask marks the visible 80%.
    pub eval_graph: Graph,
    pub warnings: Vec<String>,
}

/// Builds the training-time and evaluation-time views for the inductive
/// protocols. The transductive setting skips this entirely.
pub fn inductive_split(
    g: &Graph,
    mode: InductiveMode,
    rng: &mut impl Rng,
) -> Result<InductiveSplit> {
    let mut warnings = Vec::new();
    match mode {
        InductiveMode::Strict => {
            let (train_graph, map) = g.induced_subgraph(&g.train_mask)?;
            if train_graph.num_edges() == 0 {
                warnings.push(format!(
                    "strict inductive training graph on {} vertices has no edges",
                    train_graph.num_vertices
                ));
            }
            Ok(InductiveSplit {
                train_graph,
                train_vertex_map: map,
                eval_graph: g.clone(),
                warnings,
            })
        }
        InductiveMode::Production => {
            let test_vertices: Vec<usize> =
                (0..g.num_vertices).filter(|&v| g.test_mask[v]).collect();
            let mut shuffled = test_vertices.clone();
            shuffled.shuffle(rng);
            let num_observed = (0.8 * test_vertices.len() as f64).round() as usize;
            let mut eval_graph = g.clone();
            for (i, &v) in shuffled.iter().enumerate() {
                if i < num_observed {
                    eval_graph.observed_mask[v] = true;
                    eval_graph.test_mask[v] = false;
                }
            }
            let keep: Vec<bool> = (0..g.num_vertices)
                .map(|v| {
                    eval_graph.train_mask[v] || eval_graph.val_mask[v] || eval_graph.observed_mask[v]
                })
                .collect();
            let (train_graph, map) = eval_graph.induced_subgraph(&keep)?;
            if train_graph.num_edges() == 0 {
                warnings.push(format!(
                    "production inductive training graph on {} vertices has no edges",
                    train_graph.num_vertices
                ));
            }
            Ok(InductiveSplit {
                train_graph,
                train_vertex_map: map,
                eval_graph,
                warnings,
            })
        }
    }
}

/// Sorted, deduplicated CSR from a directed edge list.
fn canonical_csr(
    num_vertices: usize,
    edges: &[(usize, usize)],
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); num_vertices];
    for &(src, dst) in edges {
        if src >= num_vertices || dst >= num_vertices {
            return Err(HgError::data(format!(
                "edge {src}->{dst} out of range for {num_vertices} vertices"
            )));
        }
        rows[src].push(dst);
    }
    let mut offsets = Vec::with_capacity(num_vertices + 1);
    let mut targets = Vec::new();
    offsets.push(0);
    for row in rows.iter_mut() {
        row.sort_unstable();
        row.dedup();
        targets.extend_from_slice(row);
        offsets.push(targets.len());
    }
    Ok((offsets, targets))
}
