//! Cross-module model invariants: equivariance under vertex relabeling,
//! GHM's blindness to intra-subgraph edges, and root-readout stability.

use std::collections::HashMap;

use hyperagg::graph::{Graph, Label, LabelKind, Neighborhood};
use hyperagg::models::{forward, Arch, ForwardCtx, Model, ModelConfig, Sampling};
use hyperagg::oracles::enumerate_permutations;
use hyperagg::rng::stream;
use hyperagg::tensor::{Matrix, Tape};

use rand::Rng;

fn random_graph(n: usize, feat_dim: usize, p: f64, seed: u64) -> Graph {
    let mut rng = stream(seed, "invgraph");
    let mut edges = Vec::new();
    for s in 0..n {
        for d in 0..n {
            if s != d && rng.gen::<f64>() < p {
                edges.push((s, d));
            }
        }
    }
    let labels = (0..n).map(|v| Label::Class(v % 2)).collect();
    Graph::build(
        n,
        &edges,
        Matrix::glorot(n, feat_dim, &mut rng),
        labels,
        LabelKind::Classes(2),
    )
    .unwrap()
    .make_undirected()
    .add_self_loops()
}

fn ghc_config() -> ModelConfig {
    ModelConfig {
        arch: Arch::Ghc,
        depth: 2,
        hidden: 5,
        mixing: 3,
        input_dropout: 0.0,
        model_dropout: 0.0,
        mixing_dropout: 0.0,
        undirected: false,
        self_loops: false,
        ..Default::default()
    }
}

fn infer_logits(model: &Model, g: &Graph, batch: Option<&[usize]>) -> Vec<f64> {
    let mut tape = Tape::new();
    let mut dr = stream(0, "infer-drop");
    let mut sr = stream(0, "infer-sample");
    let mut ctx = ForwardCtx {
        training: false,
        dropout_rng: &mut dr,
        sampling: Sampling::Fresh(&mut sr),
    };
    let out = forward(&mut tape, model, g, batch, &mut ctx).unwrap();
    tape.data(out).to_vec()
}

fn relabel(g: &Graph, perm: &[usize]) -> Graph {
    // perm[new] = old
    let n = g.num_vertices;
    let mut inverse = vec![0usize; n];
    for (new, &old) in perm.iter().enumerate() {
        inverse[old] = new;
    }
    let edges: Vec<(usize, usize)> = g
        .edge_list()
        .into_iter()
        .map(|(s, d)| (inverse[s], inverse[d]))
        .collect();
    let cols = g.features.cols();
    let mut fdata = Vec::with_capacity(n * cols);
    for &old in perm {
        fdata.extend_from_slice(g.features.row(old));
    }
    let mut out = Graph::build(
        n,
        &edges,
        Matrix::from_vec(n, cols, fdata).unwrap(),
        perm.iter().map(|&old| g.labels[old]).collect(),
        g.label_kind,
    )
    .unwrap();
    out.train_mask = perm.iter().map(|&old| g.train_mask[old]).collect();
    out.val_mask = perm.iter().map(|&old| g.val_mask[old]).collect();
    out.test_mask = perm.iter().map(|&old| g.test_mask[old]).collect();
    out
}

#[test]
fn ghc_forward_is_equivariant_under_vertex_relabeling() {
    for seed in 0..3u64 {
        let n = 8;
        let g = random_graph(n, 4, 0.3, seed);
        let model = Model::init(ghc_config(), 4, 2, &mut stream(seed, "init")).unwrap();
        let base = infer_logits(&model, &g, None);

        let mut rng = stream(seed, "perm");
        let mut perm: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng);
        let pg = relabel(&g, &perm);
        let permuted = infer_logits(&model, &pg, None);

        for new in 0..n {
            let old = perm[new];
            for c in 0..2 {
                let a = permuted[new * 2 + c];
                let b = base[old * 2 + c];
                assert!(
                    (a - b).abs() < 1e-8,
                    "seed {seed}, vertex {old}->{new}: {a} vs {b}"
                );
            }
        }
    }
}

#[test]
fn ghm_ignores_edges_between_sampled_members() {
    // k=1, cap unbounded: membership is the root's 1-hop set, which edge
    // changes among non-root members cannot alter
    let n = 7;
    let base = random_graph(n, 4, 0.4, 11);
    let config = ModelConfig {
        arch: Arch::Ghm,
        depth: 2,
        hidden: 5,
        mixing: 3,
        k_hop: 1,
        subgraph_cap: 0,
        input_dropout: 0.0,
        model_dropout: 0.0,
        undirected: false,
        self_loops: false,
        ..Default::default()
    };
    let model = Model::init(config, 4, 2, &mut stream(2, "init")).unwrap();

    let root = 0usize;
    let members = base.neighborhood_1hop(root).members;
    assert!(members.len() >= 3, "need a few members for the rewiring");

    // rewire: toggle an edge between two non-root members
    let (a, b) = {
        let non_root: Vec<usize> = members.iter().copied().filter(|&m| m != root).collect();
        (non_root[0], non_root[1])
    };
    let mut edges = base.edge_list();
    let had = edges.contains(&(a, b));
    if had {
        edges.retain(|&(s, d)| !((s, d) == (a, b) || (s, d) == (b, a)));
    } else {
        edges.push((a, b));
        edges.push((b, a));
    }
    let mut rewired = Graph::build(
        n,
        &edges,
        base.features.clone(),
        base.labels.clone(),
        base.label_kind,
    )
    .unwrap();
    rewired.train_mask = base.train_mask.clone();
    rewired.val_mask = base.val_mask.clone();
    rewired.test_mask = base.test_mask.clone();

    // membership of the root's 1-hop set is unchanged by construction
    assert_eq!(base.neighborhood_1hop(root).members, rewired.neighborhood_1hop(root).members);

    let x = infer_logits(&model, &base, Some(&[root]));
    let y = infer_logits(&model, &rewired, Some(&[root]));
    for (p, q) in x.iter().zip(&y) {
        assert_eq!(p, q, "edge rewiring leaked into GHM logits");
    }
}

#[test]
fn ghm_root_output_invariant_to_non_root_member_order() {
    let n = 6;
    let g = random_graph(n, 4, 0.5, 23);
    let config = ModelConfig {
        arch: Arch::Ghm,
        depth: 1,
        hidden: 4,
        mixing: 3,
        k_hop: 1,
        subgraph_cap: 0,
        input_dropout: 0.0,
        model_dropout: 0.0,
        undirected: false,
        self_loops: false,
        ..Default::default()
    };
    let model = Model::init(config, 4, 2, &mut stream(3, "init")).unwrap();

    let root = 1usize;
    let nb = g.neighborhood_1hop(root);
    let others: Vec<usize> = nb.members.iter().copied().filter(|&m| m != root).collect();
    let k = others.len().min(4);
    let others = &others[..k];

    let run_with_members = |members: Vec<usize>| -> Vec<f64> {
        let root_pos = members.iter().position(|&m| m == root).unwrap();
        let mut map = HashMap::new();
        map.insert(
            root,
            Neighborhood {
                root,
                members,
                root_pos,
            },
        );
        let mut tape = Tape::new();
        let mut dr = stream(0, "drop");
        let mut ctx = ForwardCtx {
            training: false,
            dropout_rng: &mut dr,
            sampling: Sampling::Frozen(&map),
        };
        let out = forward(&mut tape, &model, &g, Some(&[root]), &mut ctx).unwrap();
        tape.data(out).to_vec()
    };

    let mut base_members = vec![root];
    base_members.extend_from_slice(others);
    let base = run_with_members(base_members);

    for perm in enumerate_permutations(k).unwrap() {
        let mut members = vec![root];
        members.extend(perm.iter().map(|&i| others[i]));
        let permuted = run_with_members(members);
        for (a, b) in base.iter().zip(&permuted) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
}

#[test]
fn ghc_on_self_loop_only_graph_is_per_vertex() {
    // every neighborhood degenerates to the single-row aggregation path, so
    // vertex logits cannot depend on any other vertex
    let n = 5;
    let edges: Vec<(usize, usize)> = (0..n).map(|v| (v, v)).collect();
    let mut rng = stream(41, "selfloop");
    let g = Graph::build(
        n,
        &edges,
        Matrix::glorot(n, 4, &mut rng),
        vec![Label::Class(0); n],
        LabelKind::Classes(2),
    )
    .unwrap();
    let model = Model::init(ghc_config(), 4, 2, &mut stream(6, "init")).unwrap();
    let base = infer_logits(&model, &g, None);

    let mut perturbed = g.clone();
    let cols = perturbed.features.cols();
    perturbed.features.data_mut()[0..cols]
        .iter_mut()
        .for_each(|x| *x += 3.0);
    let after = infer_logits(&model, &perturbed, None);
    // vertex 0 moved, everyone else identical
    assert!((base[0] - after[0]).abs() > 1e-9 || (base[1] - after[1]).abs() > 1e-9);
    for v in 1..n {
        for c in 0..2 {
            assert_eq!(base[v * 2 + c], after[v * 2 + c]);
        }
    }

    // identical features give identical logits on such a graph
    let mut twin = g.clone();
    let row0: Vec<f64> = twin.features.row(0).to_vec();
    twin.features.data_mut()[cols..2 * cols].copy_from_slice(&row0);
    let twin_logits = infer_logits(&model, &twin, None);
    for c in 0..2 {
        assert!((twin_logits[c] - twin_logits[2 + c]).abs() < 1e-12);
    }
}

#[test]
fn ghm_cap_one_collapses_to_per_vertex_mlp() {
    // cap=1 leaves only the root in every subgraph, so logits must not
    // depend on any other vertex's features
    let g = random_graph(6, 4, 0.5, 31);
    let config = ModelConfig {
        arch: Arch::Ghm,
        depth: 1,
        hidden: 4,
        mixing: 2,
        k_hop: 2,
        subgraph_cap: 1,
        input_dropout: 0.0,
        model_dropout: 0.0,
        undirected: false,
        self_loops: false,
        ..Default::default()
    };
    let model = Model::init(config, 4, 2, &mut stream(4, "init")).unwrap();
    let base = infer_logits(&model, &g, Some(&[2]));

    let mut perturbed = g.clone();
    for v in [0usize, 1, 3, 4, 5] {
        let cols = perturbed.features.cols();
        let row = &mut perturbed.features.data_mut()[v * cols..(v + 1) * cols];
        row.iter_mut().for_each(|x| *x += 5.0);
    }
    let after = infer_logits(&model, &perturbed, Some(&[2]));
    assert_eq!(base, after);
}
