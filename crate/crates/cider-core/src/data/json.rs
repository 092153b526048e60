//! Native dataset serialization: one JSON file per graph plus a manifest
//! carrying the name, class count, and split indices. Keys serialize in
//! sorted order and floats in shortest round-trip form, so saved bytes are
//! deterministic and reload exactly.

use crate::autodiff::Mat;
use crate::error::{CiderError, Result};
use crate::graph::{upper_triangle_edges, Dataset, Graph, Split};
use serde_json::{json, Map, Value};
use std::path::Path;

pub fn graph_to_json(g: &Graph) -> Value {
    let x: Vec<Vec<f64>> = (0..g.n)
        .map(|i| (0..g.feature_dim()).map(|j| g.x.at(i, j)).collect())
        .collect();
    let edges: Vec<[usize; 2]> = upper_triangle_edges(&g.a)
        .into_iter()
        .map(|(u, v)| [u, v])
        .collect();
    let mut obj = Map::new();
    obj.insert("n".into(), json!(g.n));
    obj.insert("d".into(), json!(g.feature_dim()));
    obj.insert("x".into(), json!(x));
    obj.insert("edges".into(), json!(edges));
    obj.insert("y".into(), json!(g.y));
    if let Some(gt) = &g.gt_mask {
        let gt_edges: Vec<[usize; 2]> = upper_triangle_edges(gt)
            .into_iter()
            .map(|(u, v)| [u, v])
            .collect();
        obj.insert("gt_edges".into(), json!(gt_edges));
    }
    Value::Object(obj)
}

fn want<'v>(v: &'v Value, key: &str) -> Result<&'v Value> {
    v.get(key)
        .ok_or_else(|| CiderError::contract(format!("missing field '{key}'")))
}

fn want_usize(v: &Value, key: &str) -> Result<usize> {
    want(v, key)?
        .as_u64()
        .map(|u| u as usize)
        .ok_or_else(|| CiderError::contract(format!("field '{key}' is not a nonnegative integer")))
}

fn edge_list(v: &Value, key: &str, n: usize) -> Result<Vec<(usize, usize)>> {
    let arr = want(v, key)?
        .as_array()
        .ok_or_else(|| CiderError::contract(format!("field '{key}' is not an array")))?;
    let mut edges = Vec::with_capacity(arr.len());
    for item in arr {
        let pair = item
            .as_array()
            .filter(|p| p.len() == 2)
            .ok_or_else(|| CiderError::contract(format!("'{key}' entries must be [u, v]")))?;
        let u = pair[0].as_u64().ok_or_else(|| {
            CiderError::contract(format!("'{key}' endpoint is not an integer"))
        })? as usize;
        let v2 = pair[1].as_u64().ok_or_else(|| {
            CiderError::contract(format!("'{key}' endpoint is not an integer"))
        })? as usize;
        if u >= n || v2 >= n || u == v2 {
            return Err(CiderError::contract(format!(
                "'{key}' edge ({u}, {v2}) is invalid for {n} nodes"
            )));
        }
        edges.push((u, v2));
    }
    Ok(edges)
}

fn edges_to_adjacency(edges: &[(usize, usize)], n: usize) -> Result<Mat> {
    let mut a = Mat::zeros(n, n);
    for &(u, v) in edges {
        if a.at(u, v) == 1.0 {
            return Err(CiderError::contract(format!("duplicate edge ({u}, {v})")));
        }
        a.set(u, v, 1.0);
        a.set(v, u, 1.0);
    }
    Ok(a)
}

pub fn graph_from_json(v: &Value) -> Result<Graph> {
    let n = want_usize(v, "n")?;
    let d = want_usize(v, "d")?;
    let y = want_usize(v, "y")?;
    let x_rows = want(v, "x")?
        .as_array()
        .ok_or_else(|| CiderError::contract("field 'x' is not an array"))?;
    if x_rows.len() != n {
        return Err(CiderError::contract(format!(
            "'x' has {} rows for {n} nodes",
            x_rows.len()
        )));
    }
    let mut x = Mat::zeros(n, d);
    for (i, row) in x_rows.iter().enumerate() {
        let row = row
            .as_array()
            .filter(|r| r.len() == d)
            .ok_or_else(|| CiderError::contract(format!("'x' row {i} is not length {d}")))?;
        for (j, cell) in row.iter().enumerate() {
            let val = cell
                .as_f64()
                .ok_or_else(|| CiderError::contract(format!("'x'[{i}][{j}] is not a number")))?;
            x.set(i, j, val);
        }
    }
    let a = edges_to_adjacency(&edge_list(v, "edges", n)?, n)?;
    let gt = if v.get("gt_edges").is_some() {
        Some(edges_to_adjacency(&edge_list(v, "gt_edges", n)?, n)?)
    } else {
        None
    };
    Graph::new(x, a, y, gt)
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)
        .map_err(|e| CiderError::contract(format!("serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CiderError::io(path, e))
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| CiderError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CiderError::Parse {
        file: path.display().to_string(),
        line: e.line(),
        detail: e.to_string(),
    })
}

pub fn save_graph_json(g: &Graph, path: &Path) -> Result<()> {
    write_json(path, &graph_to_json(g))
}

pub fn load_graph_json(path: &Path) -> Result<Graph> {
    graph_from_json(&read_json(path)?).map_err(|e| CiderError::Parse {
        file: path.display().to_string(),
        line: 0,
        detail: e.to_string(),
    })
}

/// Directory layout: `manifest.json` plus `graphs/NNNNN.json` in index order.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    let graphs_dir = dir.join("graphs");
    std::fs::create_dir_all(&graphs_dir).map_err(|e| CiderError::io(&graphs_dir, e))?;
    let manifest = json!({
        "name": ds.name,
        "class_count": ds.class_count,
        "graph_count": ds.graphs.len(),
        "splits": {
            "train": ds.split.train,
            "validation": ds.split.validation,
            "test": ds.split.test,
        },
    });
    write_json(&dir.join("manifest.json"), &manifest)?;
    for (i, g) in ds.graphs.iter().enumerate() {
        save_graph_json(g, &graphs_dir.join(format!("{i:05}.json")))?;
    }
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join("manifest.json");
    let manifest = read_json(&manifest_path)?;
    let to_parse_err = |e: CiderError| CiderError::Parse {
        file: manifest_path.display().to_string(),
        line: 0,
        detail: e.to_string(),
    };
    let name = want(&manifest, "name")
        .map_err(to_parse_err)?
        .as_str()
        .ok_or_else(|| CiderError::contract("manifest 'name' is not a string"))?
        .to_string();
    let class_count = want_usize(&manifest, "class_count").map_err(to_parse_err)?;
    let graph_count = want_usize(&manifest, "graph_count").map_err(to_parse_err)?;
    let splits = want(&manifest, "splits").map_err(to_parse_err)?;
    let index_list = |key: &str| -> Result<Vec<usize>> {
        want(splits, key)?
            .as_array()
            .ok_or_else(|| CiderError::contract(format!("split '{key}' is not an array")))?
            .iter()
            .map(|v| {
                v.as_u64()
                    .map(|u| u as usize)
                    .ok_or_else(|| CiderError::contract("split index is not an integer"))
            })
            .collect()
    };
    let split = Split {
        train: index_list("train").map_err(to_parse_err)?,
        validation: index_list("validation").map_err(to_parse_err)?,
        test: index_list("test").map_err(to_parse_err)?,
    };
    let mut graphs = Vec::with_capacity(graph_count);
    for i in 0..graph_count {
        graphs.push(load_graph_json(&dir.join("graphs").join(format!("{i:05}.json")))?);
    }
    Dataset::new(name, class_count, graphs, split)
}
