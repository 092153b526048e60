//! Expression-matrix ingestion: clean out silent rows and columns, optionally
//! average cells into cell types, and build a correlation network whose nodes
//! are genes and whose features are the expression profiles themselves.

use crate::autodiff::Mat;
use crate::error::{CiderError, Result};
use crate::graph::Graph;
use std::collections::{HashMap, HashSet};
use std::path::Path;

/// A named real matrix: rows are genes, columns are cells or cell types.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMatrix {
    pub row_names: Vec<String>,
    pub col_names: Vec<String>,
    pub values: Mat,
}

impl TabularMatrix {
    pub fn new(row_names: Vec<String>, col_names: Vec<String>, values: Mat) -> Result<Self> {
        if row_names.len() != values.rows || col_names.len() != values.cols {
            return Err(CiderError::dim(
                "tabular",
                format!(
                    "{} row names and {} column names for a {}x{} matrix",
                    row_names.len(),
                    col_names.len(),
                    values.rows,
                    values.cols
                ),
            ));
        }
        let unique_rows: HashSet<&String> = row_names.iter().collect();
        if unique_rows.len() != row_names.len() {
            return Err(CiderError::contract("duplicate row names"));
        }
        let unique_cols: HashSet<&String> = col_names.iter().collect();
        if unique_cols.len() != col_names.len() {
            return Err(CiderError::contract("duplicate column names"));
        }
        Ok(TabularMatrix {
            row_names,
            col_names,
            values,
        })
    }
}

fn csv_line(e: &csv::Error) -> usize {
    e.position().map(|p| p.line() as usize).unwrap_or(0)
}

/// Read an expression CSV: header row holds the cell names (first header cell
/// labels the gene column and is ignored), each record is a gene name
/// followed by its values.
pub fn read_expression_csv(path: &Path) -> Result<TabularMatrix> {
    let file = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| CiderError::Parse {
        file: file.clone(),
        line: csv_line(&e),
        detail: e.to_string(),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| CiderError::Parse {
            file: file.clone(),
            line: 1,
            detail: e.to_string(),
        })?
        .clone();
    if headers.len() < 2 {
        return Err(CiderError::Parse {
            file,
            line: 1,
            detail: "expected a gene column plus at least one cell column".into(),
        });
    }
    let col_names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();

    let mut row_names = Vec::new();
    let mut data = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CiderError::Parse {
            file: file.clone(),
            line: csv_line(&e),
            detail: e.to_string(),
        })?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(0);
        row_names.push(record.get(0).unwrap_or("").to_string());
        for (i, field) in record.iter().enumerate().skip(1) {
            let v: f64 = field.trim().parse().map_err(|_| CiderError::Parse {
                file: file.clone(),
                line,
                detail: format!("bad value '{field}' in column {i}"),
            })?;
            data.push(v);
        }
    }
    if row_names.is_empty() {
        return Err(CiderError::Parse {
            file,
            line: 2,
            detail: "no data rows".into(),
        });
    }
    let values = Mat::from_vec(row_names.len(), col_names.len(), data)?;
    TabularMatrix::new(row_names, col_names, values)
}

/// Read a two-column annotation CSV (header row, then cell,type records).
pub fn read_annotation_csv(path: &Path) -> Result<HashMap<String, String>> {
    let file = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| CiderError::Parse {
        file: file.clone(),
        line: csv_line(&e),
        detail: e.to_string(),
    })?;
    let mut map = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| CiderError::Parse {
            file: file.clone(),
            line: csv_line(&e),
            detail: e.to_string(),
        })?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(0);
        if record.len() < 2 {
            return Err(CiderError::Parse {
                file: file.clone(),
                line,
                detail: "expected cell,type".into(),
            });
        }
        let cell = record.get(0).unwrap().trim().to_string();
        let kind = record.get(1).unwrap().trim().to_string();
        if map.insert(cell.clone(), kind).is_some() {
            return Err(CiderError::Parse {
                file: file.clone(),
                line,
                detail: format!("cell '{cell}' annotated twice"),
            });
        }
    }
    Ok(map)
}

/// Drop all-zero rows and all-zero columns, iterating until stable.
pub fn clean_matrix(m: &TabularMatrix) -> Result<TabularMatrix> {
    let mut rows: Vec<usize> = (0..m.values.rows).collect();
    let mut cols: Vec<usize> = (0..m.values.cols).collect();
    loop {
        let next_rows: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|&r| cols.iter().any(|&c| m.values.at(r, c) != 0.0))
            .collect();
        let next_cols: Vec<usize> = cols
            .iter()
            .copied()
            .filter(|&c| rows.iter().any(|&r| m.values.at(r, c) != 0.0))
            .collect();
        let stable = next_rows == rows && next_cols == cols;
        rows = next_rows;
        cols = next_cols;
        if stable {
            break;
        }
    }
    if rows.is_empty() || cols.is_empty() {
        return Err(CiderError::contract(
            "cleaning removed every row or column",
        ));
    }
    let mut values = Mat::zeros(rows.len(), cols.len());
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            values.set(i, j, m.values.at(r, c));
        }
    }
    TabularMatrix::new(
        rows.iter().map(|&r| m.row_names[r].clone()).collect(),
        cols.iter().map(|&c| m.col_names[c].clone()).collect(),
        values,
    )
}

/// Average columns that share a cell type. Output columns appear in
/// first-appearance order of the types.
pub fn aggregate_by_celltype(
    m: &TabularMatrix,
    annotation: &HashMap<String, String>,
) -> Result<TabularMatrix> {
    let mut type_order: Vec<String> = Vec::new();
    let mut members: HashMap<String, Vec<usize>> = HashMap::new();
    for (c, name) in m.col_names.iter().enumerate() {
        let kind = annotation.get(name).ok_or_else(|| {
            CiderError::contract(format!("column '{name}' lacks a cell-type annotation"))
        })?;
        if !members.contains_key(kind) {
            type_order.push(kind.clone());
        }
        members.entry(kind.clone()).or_default().push(c);
    }
    let mut values = Mat::zeros(m.values.rows, type_order.len());
    for (j, kind) in type_order.iter().enumerate() {
        let group = &members[kind];
        for r in 0..m.values.rows {
            let sum: f64 = group.iter().map(|&c| m.values.at(r, c)).sum();
            values.set(r, j, sum / group.len() as f64);
        }
    }
    TabularMatrix::new(m.row_names.clone(), type_order, values)
}

/// Pearson correlation of two equal-length samples; None when either side
/// has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va.sqrt() * vb.sqrt()))
}

/// Nodes are rows; an edge joins rows whose absolute Pearson correlation
/// reaches the threshold; zero-variance rows stay isolated. The node features
/// are the expression profiles themselves. Thresholds above 1 simply produce
/// an edgeless graph.
pub fn correlation_network(m: &TabularMatrix, threshold: f64) -> Result<Graph> {
    if m.values.cols < 2 {
        return Err(CiderError::contract(
            "a correlation network needs at least two columns",
        ));
    }
    if !threshold.is_finite() {
        return Err(CiderError::contract("threshold must be finite"));
    }
    let n = m.values.rows;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|r| (0..m.values.cols).map(|c| m.values.at(r, c)).collect())
        .collect();
    let mut a = Mat::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if let Some(r) = pearson(&rows[i], &rows[j]) {
                if r.abs() >= threshold {
                    a.set(i, j, 1.0);
                    a.set(j, i, 1.0);
                }
            }
        }
    }
    Graph::new(m.values.clone(), a, 0, None)
}
