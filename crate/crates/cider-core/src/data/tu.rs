//! Loader for the plain-text multi-file graph-dataset convention: a global
//! edge list, a node-to-graph indicator, per-graph labels, and optional
//! per-node labels that become one-hot features.

use crate::autodiff::Mat;
use crate::error::{CiderError, Result};
use crate::graph::{Dataset, Graph, Split};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

fn parse_err(file: &Path, line: usize, detail: impl Into<String>) -> CiderError {
    CiderError::Parse {
        file: file.display().to_string(),
        line,
        detail: detail.into(),
    }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| CiderError::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .collect())
}

fn find_prefix(dir: &Path) -> Result<String> {
    let mut candidates: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| CiderError::io(dir, e))?
        .filter_map(|entry| entry.ok())
        .filter_map(|entry| entry.file_name().into_string().ok())
        .filter_map(|name| name.strip_suffix("_A.txt").map(str::to_string))
        .collect();
    candidates.sort();
    candidates.into_iter().next().ok_or_else(|| {
        CiderError::contract(format!(
            "no <name>_A.txt edge list found in {}",
            dir.display()
        ))
    })
}

/// Load a dataset directory containing `<name>_A.txt`,
/// `<name>_graph_indicator.txt`, `<name>_graph_labels.txt`, and optionally
/// `<name>_node_labels.txt`. Edges are symmetrized and deduplicated and
/// self-loops dropped; graph labels are remapped to 0-based contiguous
/// classes; node labels one-hot encode into features (all-ones single column
/// when absent). The split starts with everything in train.
pub fn load_tu_dataset(dir: &Path) -> Result<Dataset> {
    let prefix = find_prefix(dir)?;
    let a_path = dir.join(format!("{prefix}_A.txt"));
    let ind_path = dir.join(format!("{prefix}_graph_indicator.txt"));
    let lab_path = dir.join(format!("{prefix}_graph_labels.txt"));
    let node_lab_path = dir.join(format!("{prefix}_node_labels.txt"));

    // node -> graph map; ids must start at 1 and grow in grouped order
    let mut node_graph: Vec<usize> = Vec::new();
    for (lno, line) in read_lines(&ind_path)? {
        let id: usize = line
            .parse()
            .map_err(|_| parse_err(&ind_path, lno, format!("bad graph id '{line}'")))?;
        let prev = node_graph.last().copied().unwrap_or(0);
        if (node_graph.is_empty() && id != 1) || (id != prev && id != prev + 1) {
            return Err(parse_err(
                &ind_path,
                lno,
                format!("graph ids must be contiguous and grouped, got {id} after {prev}"),
            ));
        }
        node_graph.push(id);
    }
    let node_count = node_graph.len();
    let graph_count = node_graph.last().copied().unwrap_or(0);
    if graph_count == 0 {
        return Err(parse_err(&ind_path, 1, "the indicator file is empty"));
    }

    // first global node index of each graph (ids are grouped and ascending)
    let mut offsets = vec![0usize; graph_count];
    for (global, &g) in node_graph.iter().enumerate() {
        if global == 0 || node_graph[global - 1] != g {
            offsets[g - 1] = global;
        }
    }
    let sizes: Vec<usize> = (0..graph_count)
        .map(|g| {
            let end = if g + 1 < graph_count {
                offsets[g + 1]
            } else {
                node_count
            };
            end - offsets[g]
        })
        .collect();

    // graph labels, remapped to 0-based contiguous classes
    let label_lines = read_lines(&lab_path)?;
    if label_lines.len() != graph_count {
        let lno = label_lines
            .get(graph_count)
            .map(|(l, _)| *l)
            .unwrap_or(label_lines.len() + 1);
        return Err(parse_err(
            &lab_path,
            lno,
            format!(
                "expected {graph_count} graph labels, found {}",
                label_lines.len()
            ),
        ));
    }
    let mut raw_labels = Vec::with_capacity(graph_count);
    for (lno, line) in &label_lines {
        let v: i64 = line
            .parse()
            .map_err(|_| parse_err(&lab_path, *lno, format!("bad graph label '{line}'")))?;
        raw_labels.push(v);
    }
    let classes: BTreeSet<i64> = raw_labels.iter().copied().collect();
    let class_index: BTreeMap<i64, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, i))
        .collect();
    let labels: Vec<usize> = raw_labels.iter().map(|v| class_index[v]).collect();

    // optional node labels become one-hot features
    let features: Vec<Mat> = if node_lab_path.exists() {
        let lines = read_lines(&node_lab_path)?;
        if lines.len() != node_count {
            let lno = lines
                .get(node_count)
                .map(|(l, _)| *l)
                .unwrap_or(lines.len() + 1);
            return Err(parse_err(
                &node_lab_path,
                lno,
                format!("expected {node_count} node labels, found {}", lines.len()),
            ));
        }
        let mut raw = Vec::with_capacity(node_count);
        for (lno, line) in &lines {
            let v: i64 = line.parse().map_err(|_| {
                parse_err(&node_lab_path, *lno, format!("bad node label '{line}'"))
            })?;
            raw.push(v);
        }
        let values: BTreeSet<i64> = raw.iter().copied().collect();
        let value_index: BTreeMap<i64, usize> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, i))
            .collect();
        let d = values.len();
        (0..graph_count)
            .map(|g| {
                let mut x = Mat::zeros(sizes[g], d);
                for local in 0..sizes[g] {
                    x.set(local, value_index[&raw[offsets[g] + local]], 1.0);
                }
                x
            })
            .collect()
    } else {
        (0..graph_count).map(|g| Mat::filled(sizes[g], 1, 1.0)).collect()
    };

    // global edge list: "u, v" with 1-indexed node ids
    let mut edge_sets: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); graph_count];
    for (lno, line) in read_lines(&a_path)? {
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(parse_err(
                &a_path,
                lno,
                format!("expected 'u, v', got '{line}'"),
            ));
        }
        let parse_id = |s: &str| -> Result<usize> {
            let id: usize = s
                .parse()
                .map_err(|_| parse_err(&a_path, lno, format!("bad node id '{s}'")))?;
            if id == 0 || id > node_count {
                return Err(parse_err(
                    &a_path,
                    lno,
                    format!("node id {id} outside 1..={node_count}"),
                ));
            }
            Ok(id)
        };
        let u = parse_id(parts[0])?;
        let v = parse_id(parts[1])?;
        if u == v {
            continue;
        }
        let (gu, gv) = (node_graph[u - 1], node_graph[v - 1]);
        if gu != gv {
            return Err(parse_err(
                &a_path,
                lno,
                format!("edge joins graphs {gu} and {gv}"),
            ));
        }
        let off = offsets[gu - 1];
        let (lu, lv) = (u - 1 - off, v - 1 - off);
        edge_sets[gu - 1].insert((lu.min(lv), lu.max(lv)));
    }

    let mut graphs = Vec::with_capacity(graph_count);
    for (g, (x, edges)) in features.into_iter().zip(edge_sets).enumerate() {
        let edge_vec: Vec<(usize, usize)> = edges.into_iter().collect();
        graphs.push(Graph::from_edges(x, &edge_vec, labels[g])?);
    }
    Dataset::new(
        prefix,
        classes.len(),
        graphs,
        Split::all_in_train(graph_count),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write_fixture(dir: &Path, with_node_labels: bool) {
        // graph 1: triangle on nodes 1..3 (class index 0 after remap);
        // graph 2: single edge on nodes 4..5 (class index 1)
        fs::write(
            dir.join("TOY_A.txt"),
            "1, 2\n2, 1\n2, 3\n3, 2\n1, 3\n3, 1\n4, 5\n5, 4\n",
        )
        .unwrap();
        fs::write(dir.join("TOY_graph_indicator.txt"), "1\n1\n1\n2\n2\n").unwrap();
        fs::write(dir.join("TOY_graph_labels.txt"), "1\n2\n").unwrap();
        if with_node_labels {
            fs::write(dir.join("TOY_node_labels.txt"), "7\n7\n8\n7\n8\n").unwrap();
        }
    }

    #[test]
    fn toy_fixture_parses_to_the_hand_specified_graphs() {
        let tmp = tempfile::tempdir().unwrap();
        write_fixture(tmp.path(), true);
        let ds = load_tu_dataset(tmp.path()).unwrap();
        assert_eq!(ds.name, "TOY");
        assert_eq!(ds.class_count, 2);
        assert_eq!(ds.graphs.len(), 2);

        let g0 = &ds.graphs[0];
        assert_eq!(g0.n, 3);
        assert_eq!(g0.edge_count(), 3);
        assert_eq!(g0.y, 0);
        // node labels {7, 8} one-hot in sorted order
        assert_eq!(g0.x.data, vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);

        let g1 = &ds.graphs[1];
        assert_eq!(g1.n, 2);
        assert_eq!(g1.edge_count(), 1);
        assert_eq!(g1.y, 1);
        assert_eq!(g1.x.data, vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(ds.split.train, vec![0, 1]);
    }

    #[test]
    fn missing_node_labels_fall_back_to_all_ones() {
        let tmp = tempfile::tempdir().unwrap();
        write_fixture(tmp.path(), false);
        let ds = load_tu_dataset(tmp.path()).unwrap();
        assert_eq!(ds.feature_dim(), 1);
        assert!(ds.graphs[0].x.data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn duplicate_and_reversed_edges_collapse() {
        let tmp = tempfile::tempdir().unwrap();
        write_fixture(tmp.path(), false);
        // append duplicates and a self-loop; the graph must not change
        let a_path = tmp.path().join("TOY_A.txt");
        let mut text = fs::read_to_string(&a_path).unwrap();
        text.push_str("1, 2\n2, 2\n");
        fs::write(&a_path, text).unwrap();
        let ds = load_tu_dataset(tmp.path()).unwrap();
        assert_eq!(ds.graphs[0].edge_count(), 3);
    }

    #[test]
    fn dangling_node_id_names_the_line() {
        let tmp = tempfile::tempdir().unwrap();
        write_fixture(tmp.path(), false);
        fs::write(tmp.path().join("TOY_A.txt"), "1, 2\n2, 9\n").unwrap();
        let err = load_tu_dataset(tmp.path()).unwrap_err();
        match err {
            CiderError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected a parse error, got {other}"),
        }
    }

    #[test]
    fn indicator_gap_names_the_line() {
        let tmp = tempfile::tempdir().unwrap();
        write_fixture(tmp.path(), false);
        fs::write(tmp.path().join("TOY_graph_indicator.txt"), "1\n1\n1\n3\n3\n").unwrap();
        let err = load_tu_dataset(tmp.path()).unwrap_err();
        match err {
            CiderError::Parse { line, detail, .. } => {
                assert_eq!(line, 4);
                assert!(detail.contains("contiguous"));
            }
            other => panic!("expected a parse error, got {other}"),
        }
    }

    #[test]
    fn label_count_mismatch_is_reported() {
        let tmp = tempfile::tempdir().unwrap();
        write_fixture(tmp.path(), false);
        fs::write(tmp.path().join("TOY_graph_labels.txt"), "1\n").unwrap();
        assert!(matches!(
            load_tu_dataset(tmp.path()),
            Err(CiderError::Parse { .. })
        ));
    }

    #[test]
    fn cross_graph_edge_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        write_fixture(tmp.path(), false);
        fs::write(tmp.path().join("TOY_A.txt"), "1, 2\n3, 4\n").unwrap();
        let err = load_tu_dataset(tmp.path()).unwrap_err();
        match err {
            CiderError::Parse { line, detail, .. } => {
                assert_eq!(line, 2);
                assert!(detail.contains("joins"));
            }
            other => panic!("expected a parse error, got {other}"),
        }
    }

    #[test]
    fn missing_edge_list_is_a_clear_error() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(load_tu_dataset(tmp.path()).is_err());
    }
}
