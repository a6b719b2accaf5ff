//! Canonical graph file format (text, line-oriented, UTF-8).
//!
//! ```text
//! HAGRAPH 1 <num_vertices> <num_edges> <feat_dim> <num_classes|REG>
//! EDGES
//! <src> <dst>                  (num_edges lines)
//! FEATURES
//! <f_1> ... <f_feat_dim>       (num_vertices lines)
//! LABELS
//! <class int | decimal | ?>    (num_vertices lines)
//! MASKS
//! train|val|test|none          (num_vertices lines)
//! GRAPHID                      (optional block)
//! <graph id>                   (num_vertices lines)
//! GTARGETS                     (optional block, needs GRAPHID)
//! <class int | decimal | ?>    (one line per member graph)
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so save followed by
//! load reproduces the graph bit-exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{HgError, Result};
use crate::graph::{Graph, Label, LabelKind};
use crate::tensor::Matrix;

struct Lines<R> {
    inner: R,
    line_no: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self, what: &str) -> Result<String> {
        let mut buf = String::new();
        let n = self.inner.read_line(&mut buf)?;
        if n == 0 {
            return Err(HgError::Parse {
                line: self.line_no + 1,
                msg: format!("unexpected end of file, expected {what}"),
            });
        }
        self.line_no += 1;
        Ok(buf.trim_end_matches(['\n', '\r']).to_string())
    }

    fn err(&self, msg: impl Into<String>) -> HgError {
        HgError::Parse {
            line: self.line_no,
            msg: msg.into(),
        }
    }
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<Graph> {
    let file = File::open(path.as_ref())?;
    let mut lines = Lines {
        inner: BufReader::new(file),
        line_no: 0,
    };

    let header = lines.next_line("header")?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 6 || parts[0] != "HAGRAPH" || parts[1] != "1" {
        return Err(lines.err(format!(
            "malformed header, expected 'HAGRAPH 1 <vertices> <edges> <feat_dim> <classes|REG>', got '{header}'"
        )));
    }
    let num_vertices: usize = parts[2]
        .parse()
        .map_err(|_| lines.err("vertex count is not an integer"))?;
    let num_edges: usize = parts[3]
        .parse()
        .map_err(|_| lines.err("edge count is not an integer"))?;
    let feat_dim: usize = parts[4]
        .parse()
        .map_err(|_| lines.err("feature dimension is not an integer"))?;
    let label_kind = if parts[5] == "REG" {
        LabelKind::Regression
    } else {
        LabelKind::Classes(
            parts[5]
                .parse()
                .map_err(|_| lines.err("class count is not an integer"))?,
        )
    };

    let marker = lines.next_line("EDGES marker")?;
    if marker != "EDGES" {
        return Err(lines.err(format!("expected 'EDGES', got '{marker}'")));
    }
    let mut edges = Vec::with_capacity(num_edges);
    for _ in 0..num_edges {
        let line = lines.next_line("an edge line")?;
        let mut it = line.split_whitespace();
        let src: usize = it
            .next()
            .ok_or_else(|| lines.err("empty edge line"))?
            .parse()
            .map_err(|_| lines.err("edge source is not an integer"))?;
        let dst: usize = it
            .next()
            .ok_or_else(|| lines.err("edge line missing target"))?
            .parse()
            .map_err(|_| lines.err("edge target is not an integer"))?;
        if src >= num_vertices || dst >= num_vertices {
            return Err(lines.err(format!("edge {src} {dst} out of range")));
        }
        edges.push((src, dst));
    }

    let marker = lines.next_line("FEATURES marker")?;
    if marker != "FEATURES" {
        return Err(lines.err(format!("expected 'FEATURES', got '{marker}'")));
    }
    let mut fdata = Vec::with_capacity(num_vertices * feat_dim);
    for _ in 0..num_vertices {
        let line = lines.next_line("a feature line")?;
        let before = fdata.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| lines.err(format!("bad feature value '{tok}'")))?;
            fdata.push(v);
        }
        if fdata.len() - before != feat_dim {
            return Err(lines.err(format!(
                "feature line has {} values, expected {feat_dim}",
                fdata.len() - before
            )));
        }
    }
    let features = Matrix::from_vec(num_vertices, feat_dim, fdata)?;

    let marker = lines.next_line("LABELS marker")?;
    if marker != "LABELS" {
        return Err(lines.err(format!("expected 'LABELS', got '{marker}'")));
    }
    let mut labels = Vec::with_capacity(num_vertices);
    for _ in 0..num_vertices {
        let line = lines.next_line("a label line")?;
        labels.push(parse_label(line.trim(), label_kind, &lines)?);
    }

    let marker = lines.next_line("MASKS marker")?;
    if marker != "MASKS" {
        return Err(lines.err(format!("expected 'MASKS', got '{marker}'")));
    }
    let mut train = vec![false; num_vertices];
    let mut val = vec![false; num_vertices];
    let mut test = vec![false; num_vertices];
    for v in 0..num_vertices {
        let line = lines.next_line("a mask line")?;
        match line.trim() {
            "train" => train[v] = true,
            "val" => val[v] = true,
            "test" => test[v] = true,
            "none" => {}
            other => return Err(lines.err(format!("unknown mask '{other}'"))),
        }
    }

    let mut g = Graph::build(num_vertices, &edges, features, labels, label_kind)?;
    g.train_mask = train;
    g.val_mask = val;
    g.test_mask = test;

    // optional trailing blocks
    loop {
        let mut buf = String::new();
        let n = lines.inner.read_line(&mut buf)?;
        if n == 0 {
            break;
        }
        lines.line_no += 1;
        let marker = buf.trim();
        if marker.is_empty() {
            continue;
        }
        match marker {
            "GRAPHID" => {
                let mut ids = Vec::with_capacity(num_vertices);
                for _ in 0..num_vertices {
                    let line = lines.next_line("a graph id line")?;
                    let id: usize = line
                        .trim()
                        .parse()
                        .map_err(|_| lines.err("graph id is not an integer"))?;
                    ids.push(id);
                }
                g.graph_ids = Some(ids);
            }
            "GTARGETS" => {
                let num_graphs = g.num_member_graphs();
                if g.graph_ids.is_none() {
                    return Err(lines.err("GTARGETS requires a GRAPHID block first"));
                }
                let mut targets = Vec::with_capacity(num_graphs);
                for _ in 0..num_graphs {
                    let line = lines.next_line("a graph target line")?;
                    targets.push(parse_label(line.trim(), label_kind, &lines)?);
                }
                g.graph_targets = Some(targets);
            }
            other => return Err(lines.err(format!("unknown block marker '{other}'"))),
        }
    }

    g.validate()?;
    Ok(g)
}

fn parse_label<R: BufRead>(tok: &str, kind: LabelKind, lines: &Lines<R>) -> Result<Label> {
    if tok == "?" {
        return Ok(Label::Unknown);
    }
    match kind {
        LabelKind::Classes(c) => {
            let class: usize = tok
                .parse()
                .map_err(|_| lines.err(format!("bad class label '{tok}'")))?;
            if class >= c {
                return Err(lines.err(format!("class label {class} out of range for {c} classes")));
            }
            Ok(Label::Class(class))
        }
        LabelKind::Regression => {
            let v: f64 = tok
                .parse()
                .map_err(|_| lines.err(format!("bad regression target '{tok}'")))?;
            Ok(Label::Value(v))
        }
    }
}

pub fn save_graph(g: &Graph, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    let classes = match g.label_kind {
        LabelKind::Classes(c) => c.to_string(),
        LabelKind::Regression => "REG".to_string(),
    };
    writeln!(
        w,
        "HAGRAPH 1 {} {} {} {}",
        g.num_vertices,
        g.num_edges(),
        g.features.cols(),
        classes
    )?;
    writeln!(w, "EDGES")?;
    for (src, dst) in g.edge_list() {
        writeln!(w, "{src} {dst}")?;
    }
    writeln!(w, "FEATURES")?;
    for v in 0..g.num_vertices {
        let row = g.features.row(v);
        let mut line = String::new();
        for (i, x) in row.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&format!("{x}"));
        }
        writeln!(w, "{line}")?;
    }
    writeln!(w, "LABELS")?;
    for label in &g.labels {
        writeln!(w, "{}", format_label(label))?;
    }
    writeln!(w, "MASKS")?;
    for v in 0..g.num_vertices {
        let mask = if g.train_mask[v] {
            "train"
        } else if g.val_mask[v] {
            "val"
        } else if g.test_mask[v] {
            "test"
        } else {
            "none"
        };
        writeln!(w, "{mask}")?;
    }
    if let Some(ids) = &g.graph_ids {
        writeln!(w, "GRAPHID")?;
        for id in ids {
            writeln!(w, "{id}")?;
        }
    }
    if let Some(targets) = &g.graph_targets {
        writeln!(w, "GTARGETS")?;
        for t in targets {
            writeln!(w, "{}", format_label(t))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn format_label(label: &Label) -> String {
    match label {
        Label::Class(c) => c.to_string(),
        Label::Value(v) => format!("{v}"),
        Label::Unknown => "?".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, SbmConfig};
    use crate::rng::stream;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = stream(7, "fmt");
        let g = generate_sbm(
            &SbmConfig {
                num_vertices: 220,
                classes: 4,
                p_in: 0.05,
                p_out: 0.01,
                feat_dim: 6,
                noise: 1.0,
            },
            &mut rng,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.hagraph");
        save_graph(&g, &path).unwrap();
        let back = load_graph(&path).unwrap();
        assert_eq!(back.num_vertices, g.num_vertices);
        assert_eq!(back.offsets, g.offsets);
        assert_eq!(back.targets, g.targets);
        assert_eq!(back.features.data(), g.features.data());
        assert_eq!(back.labels, g.labels);
        assert_eq!(back.train_mask, g.train_mask);
        assert_eq!(back.val_mask, g.val_mask);
        assert_eq!(back.test_mask, g.test_mask);
    }

    #[test]
    fn fixture_has_documented_shape() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/tiny5.hagraph");
        let g = load_graph(path).unwrap();
        assert_eq!(g.num_vertices, 5);
        assert_eq!(
            g.edge_list(),
            vec![(0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2), (3, 4), (4, 3)]
        );
        assert_eq!(g.label_kind, LabelKind::Classes(2));
        assert_eq!(g.train_mask, vec![true, true, false, false, false]);
    }

    #[test]
    fn malformed_header_reports_line_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.hagraph");
        std::fs::write(&path, "NOTAGRAPH\n").unwrap();
        match load_graph(&path) {
            Err(HgError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_feature_block_reports_length() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.hagraph");
        std::fs::write(
            &path,
            "HAGRAPH 1 2 0 2 2\nEDGES\nFEATURES\n0.5 0.5\n",
        )
        .unwrap();
        match load_graph(&path) {
            Err(HgError::Parse { line, msg }) => {
                assert_eq!(line, 5);
                assert!(msg.contains("end of file"), "{msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn short_feature_line_is_a_length_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.hagraph");
        std::fs::write(
            &path,
            "HAGRAPH 1 1 0 3 2\nEDGES\nFEATURES\n0.5 0.5\n",
        )
        .unwrap();
        match load_graph(&path) {
            Err(HgError::Parse { line, msg }) => {
                assert_eq!(line, 4);
                assert!(msg.contains("expected 3"), "{msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
