//! Graph data model: adjacency handling, GCN normalization, edge-probability
//! algebra, Bernoulli sampling, and sparsity-controlled subgraph selection.

use crate::autodiff::{Mat, Tape, Tensor};
use crate::error::{CiderError, Result};
use rand::Rng;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A labeled undirected graph. The adjacency is dense 0/1, symmetric, with a
/// zero diagonal; `gt_mask`, when present, marks the ground-truth explanation
/// edges and is a subgraph of `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    pub n: usize,
    pub x: Mat,
    pub a: Mat,
    pub y: usize,
    pub gt_mask: Option<Mat>,
}

impl Graph {
    pub fn new(x: Mat, a: Mat, y: usize, gt_mask: Option<Mat>) -> Result<Self> {
        let n = x.rows;
        check_adjacency(&a, n, "adjacency")?;
        if let Some(gt) = &gt_mask {
            check_adjacency(gt, n, "gt_mask")?;
            for (g, av) in gt.data.iter().zip(a.data.iter()) {
                if *g > *av {
                    return Err(CiderError::contract(
                        "gt_mask contains an edge missing from the adjacency",
                    ));
                }
            }
        }
        Ok(Graph { n, x, a, y, gt_mask })
    }

    /// Build from an undirected edge list; duplicates and self-loops are
    /// rejected rather than silently dropped.
    pub fn from_edges(x: Mat, edges: &[(usize, usize)], y: usize) -> Result<Self> {
        let n = x.rows;
        let mut a = Mat::zeros(n, n);
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(CiderError::contract(format!(
                    "edge ({u},{v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                return Err(CiderError::contract(format!("self-loop at node {u}")));
            }
            if a.at(u, v) != 0.0 {
                return Err(CiderError::contract(format!("duplicate edge ({u},{v})")));
            }
            a.set(u, v, 1.0);
            a.set(v, u, 1.0);
        }
        Graph::new(x, a, y, None)
    }

    pub fn feature_dim(&self) -> usize {
        self.x.cols
    }

    /// Undirected edges as (u, v) with u < v, row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        upper_triangle_edges(&self.a)
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }
}

fn check_adjacency(a: &Mat, n: usize, what: &str) -> Result<()> {
    if a.rows != n || a.cols != n {
        return Err(CiderError::dim(
            "graph",
            format!("{what} is {}x{}, expected {n}x{n}", a.rows, a.cols),
        ));
    }
    if !a.is_symmetric() {
        return Err(CiderError::contract(format!("{what} is not symmetric")));
    }
    for i in 0..n {
        if a.at(i, i) != 0.0 {
            return Err(CiderError::contract(format!(
                "{what} has a nonzero diagonal at node {i}"
            )));
        }
    }
    if a.data.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(CiderError::contract(format!("{what} entries must be 0 or 1")));
    }
    Ok(())
}

/// Undirected edges (u < v) present in a 0/1 adjacency.
pub fn upper_triangle_edges(a: &Mat) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for u in 0..a.rows {
        for v in (u + 1)..a.cols {
            if a.at(u, v) != 0.0 {
                out.push((u, v));
            }
        }
    }
    out
}

/// Symmetric matrix of independent edge probabilities with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeProbMatrix {
    mat: Mat,
}

impl EdgeProbMatrix {
    pub fn new(mat: Mat) -> Result<Self> {
        if mat.rows != mat.cols {
            return Err(CiderError::dim(
                "edge_probs",
                format!("{}x{} is not square", mat.rows, mat.cols),
            ));
        }
        if !mat.is_symmetric() {
            return Err(CiderError::contract("edge probabilities must be symmetric"));
        }
        for i in 0..mat.rows {
            if mat.at(i, i) != 0.0 {
                return Err(CiderError::contract(
                    "edge probabilities must have a zero diagonal",
                ));
            }
        }
        if mat.data.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(CiderError::contract(
                "edge probabilities must lie in [0,1]",
            ));
        }
        Ok(EdgeProbMatrix { mat })
    }

    pub fn zeros(n: usize) -> Self {
        EdgeProbMatrix { mat: Mat::zeros(n, n) }
    }

    pub fn n(&self) -> usize {
        self.mat.rows
    }

    pub fn mat(&self) -> &Mat {
        &self.mat
    }

    pub fn into_mat(self) -> Mat {
        self.mat
    }

    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.mat.at(u, v)
    }
}

/// GCN propagation matrix: Â = D̃^{-1/2} (W + I) D̃^{-1/2}, where D̃ holds the
/// row sums of W + I. Accepts soft nonnegative weights.
pub fn normalize_adjacency(w: &Mat) -> Result<Mat> {
    if w.rows != w.cols {
        return Err(CiderError::dim(
            "normalize_adjacency",
            format!("{}x{} is not square", w.rows, w.cols),
        ));
    }
    if !w.is_symmetric() {
        return Err(CiderError::contract(
            "normalize_adjacency needs a symmetric input",
        ));
    }
    if w.data.iter().any(|&v| v < 0.0) {
        return Err(CiderError::contract(
            "normalize_adjacency needs nonnegative weights",
        ));
    }
    let n = w.rows;
    let mut scale = vec![0.0; n];
    for (i, s) in scale.iter_mut().enumerate() {
        let deg: f64 = (0..n).map(|j| w.at(i, j)).sum::<f64>() + 1.0;
        *s = 1.0 / deg.sqrt();
    }
    let mut out = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let wij = w.at(i, j) + if i == j { 1.0 } else { 0.0 };
            out.set(i, j, wij * scale[i] * scale[j]);
        }
    }
    Ok(out)
}

/// Tape-recorded GCN normalization so the propagation matrix stays
/// differentiable with respect to soft edge weights. The rsqrt of the degree
/// is composed as exp(-0.5 * log(deg)); deg >= 1 always holds because of the
/// added self-loop, so the log floor never engages.
pub fn normalize_adjacency_on_tape(tape: &mut Tape, w: Tensor) -> Result<Tensor> {
    if w.rows != w.cols {
        return Err(CiderError::dim(
            "normalize_adjacency",
            format!("{}x{} is not square", w.rows, w.cols),
        ));
    }
    if !tape.value(w).is_symmetric() {
        return Err(CiderError::contract(
            "normalize_adjacency needs a symmetric input",
        ));
    }
    let n = w.rows;
    let eye = tape.constant(Mat::eye(n));
    let wi = tape.add(w, eye)?;
    let ones = tape.constant(Mat::filled(n, 1, 1.0));
    let deg = tape.matmul(wi, ones)?;
    let log_deg = tape.log(deg)?;
    let half_neg = tape.scalar_mul(log_deg, -0.5)?;
    let s = tape.exp(half_neg)?;
    let st = tape.transpose(s)?;
    let outer = tape.matmul(s, st)?;
    tape.mul(wi, outer)
}

/// Independent Bernoulli draw per node pair, mirrored across the diagonal.
pub fn sample_edges(p: &EdgeProbMatrix, rng: &mut impl Rng) -> Mat {
    let n = p.n();
    let mut a = Mat::zeros(n, n);
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.gen::<f64>() < p.at(u, v) {
                a.set(u, v, 1.0);
                a.set(v, u, 1.0);
            }
        }
    }
    a
}

/// Probabilistic OR of two independent edge distributions:
/// p = 1 - (1 - pc)(1 - ps).
pub fn union_probs(pc: &EdgeProbMatrix, ps: &EdgeProbMatrix) -> Result<EdgeProbMatrix> {
    let mat = pc
        .mat()
        .zip(ps.mat(), |a, b| 1.0 - (1.0 - a) * (1.0 - b))?;
    EdgeProbMatrix::new(mat)
}

/// Restrict a distribution to the support of an observed adjacency: P ⊙ A.
pub fn mask_to_support(p: &EdgeProbMatrix, a: &Mat) -> Result<EdgeProbMatrix> {
    let mat = p.mat().zip(a, |pv, av| pv * av)?;
    EdgeProbMatrix::new(mat)
}

/// Keep the k highest-scoring edges within A's support. Ties break
/// lexicographically by (min endpoint, max endpoint).
pub fn top_k_edges(score: &Mat, a: &Mat, k: usize) -> Result<Mat> {
    let mut edges: Vec<(usize, usize, f64)> = upper_triangle_edges(a)
        .into_iter()
        .map(|(u, v)| (u, v, score.at(u, v)))
        .collect();
    if k > edges.len() {
        return Err(CiderError::contract(format!(
            "top_k_edges asked for {k} edges but the graph has {}",
            edges.len()
        )));
    }
    edges.sort_by(|x, y| {
        y.2.partial_cmp(&x.2)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.0.cmp(&y.0))
            .then(x.1.cmp(&y.1))
    });
    let mut out = Mat::zeros(a.rows, a.cols);
    for &(u, v, _) in edges.iter().take(k) {
        out.set(u, v, 1.0);
        out.set(v, u, 1.0);
    }
    Ok(out)
}

/// Train/validation/test index lists over a dataset's graphs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn all_in_train(count: usize) -> Self {
        Split {
            train: (0..count).collect(),
            validation: Vec::new(),
            test: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub class_count: usize,
    pub graphs: Vec<Graph>,
    pub split: Split,
}

impl Dataset {
    /// Validates shared feature width, label range, and that the split is a
    /// disjoint cover of all graph indices.
    pub fn new(name: String, class_count: usize, graphs: Vec<Graph>, split: Split) -> Result<Self> {
        if let Some(first) = graphs.first() {
            let d = first.feature_dim();
            if graphs.iter().any(|g| g.feature_dim() != d) {
                return Err(CiderError::contract(
                    "graphs disagree on feature dimension",
                ));
            }
        }
        if let Some(g) = graphs.iter().find(|g| g.y >= class_count) {
            return Err(CiderError::contract(format!(
                "label {} out of range for {class_count} classes",
                g.y
            )));
        }
        let mut seen = vec![false; graphs.len()];
        for &i in split
            .train
            .iter()
            .chain(&split.validation)
            .chain(&split.test)
        {
            if i >= graphs.len() {
                return Err(CiderError::contract(format!(
                    "split index {i} out of range for {} graphs",
                    graphs.len()
                )));
            }
            if seen[i] {
                return Err(CiderError::contract(format!(
                    "split assigns graph {i} more than once"
                )));
            }
            seen[i] = true;
        }
        if seen.iter().any(|&s| !s) {
            return Err(CiderError::contract("split does not cover every graph"));
        }
        Ok(Dataset {
            name,
            class_count,
            graphs,
            split,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.graphs.first().map_or(0, Graph::feature_dim)
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}

/// Deterministic stratified split: per class, indices are shuffled by the
/// seeded generator and cut at the cumulative ratio boundaries.
pub fn split_dataset(ds: &Dataset, ratios: (f64, f64, f64), seed: u64) -> Result<Dataset> {
    let (tr, va, te) = ratios;
    if tr < 0.0 || va < 0.0 || te < 0.0 || (tr + va + te - 1.0).abs() > 1e-9 {
        return Err(CiderError::contract(format!(
            "split ratios ({tr}, {va}, {te}) must be nonnegative and sum to 1"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count];
    for (i, g) in ds.graphs.iter().enumerate() {
        by_class[g.y].push(i);
    }
    if let Some(c) = by_class.iter().position(Vec::is_empty) {
        return Err(CiderError::contract(format!(
            "class {c} has no graphs; cannot stratify"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split::default();
    for group in &mut by_class {
        group.shuffle(&mut rng);
        let m = group.len();
        let b1 = (tr * m as f64).round() as usize;
        let b2 = ((tr + va) * m as f64).round() as usize;
        let (b1, b2) = (b1.min(m), b2.min(m).max(b1));
        split.train.extend(&group[..b1]);
        split.validation.extend(&group[b1..b2]);
        split.test.extend(&group[b2..]);
    }
    Dataset::new(ds.name.clone(), ds.class_count, ds.graphs.clone(), split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph(n: usize, d: usize) -> Graph {
        let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        Graph::from_edges(Mat::filled(n, d, 1.0), &edges, 0).unwrap()
    }

    #[test]
    fn normalize_isolated_node_is_one() {
        let out = normalize_adjacency(&Mat::zeros(1, 1)).unwrap();
        assert_eq!(out.data, vec![1.0]);
    }

    #[test]
    fn normalize_single_edge_gives_all_half() {
        let mut w = Mat::zeros(2, 2);
        w.set(0, 1, 1.0);
        w.set(1, 0, 1.0);
        let out = normalize_adjacency(&w).unwrap();
        assert!(out.data.iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn normalize_zero_matrix_is_identity() {
        let out = normalize_adjacency(&Mat::zeros(4, 4)).unwrap();
        assert_eq!(out, Mat::eye(4));
    }

    #[test]
    fn normalize_rejects_asymmetric_input() {
        let mut w = Mat::zeros(2, 2);
        w.set(0, 1, 1.0);
        assert!(normalize_adjacency(&w).is_err());
    }

    #[test]
    fn normalize_output_is_symmetric_and_nonnegative() {
        let g = path_graph(6, 2);
        let out = normalize_adjacency(&g.a).unwrap();
        assert!(out.is_symmetric());
        assert!(out.data.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn tape_normalization_matches_plain_version() {
        let g = path_graph(5, 2);
        let plain = normalize_adjacency(&g.a).unwrap();
        let mut tape = Tape::new();
        let w = tape.constant(g.a.clone());
        let ahat = normalize_adjacency_on_tape(&mut tape, w).unwrap();
        for (a, b) in tape.value(ahat).data.iter().zip(plain.data.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_edges_respects_degenerate_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let zero = EdgeProbMatrix::zeros(6);
        assert_eq!(sample_edges(&zero, &mut rng).sum(), 0.0);

        let mut ones = Mat::filled(6, 6, 1.0);
        for i in 0..6 {
            ones.set(i, i, 0.0);
        }
        let full = EdgeProbMatrix::new(ones).unwrap();
        assert_eq!(sample_edges(&full, &mut rng).sum(), 30.0);
    }

    #[test]
    fn sample_edges_matches_binomial_statistics() {
        // 100 nodes, p = 0.5: 4950 pairs, mean 2475, per-draw sd ~35.18.
        // The mean over 1000 draws has sd 35.18/sqrt(1000) ~ 1.113.
        let n = 100;
        let mut half = Mat::filled(n, n, 0.5);
        for i in 0..n {
            half.set(i, i, 0.0);
        }
        let p = EdgeProbMatrix::new(half).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = 1000;
        let mut total = 0.0;
        for _ in 0..draws {
            total += sample_edges(&p, &mut rng).sum() / 2.0;
        }
        let mean = total / draws as f64;
        let sd_of_mean = (4950.0f64 * 0.25).sqrt() / (draws as f64).sqrt();
        assert!(
            (mean - 2475.0).abs() <= 3.0 * sd_of_mean,
            "mean edge count {mean} outside 3 sigma of 2475"
        );
    }

    #[test]
    fn union_probs_identities() {
        let zero = EdgeProbMatrix::zeros(3);
        let mut m = Mat::zeros(3, 3);
        m.set(0, 1, 0.5);
        m.set(1, 0, 0.5);
        let p = EdgeProbMatrix::new(m).unwrap();

        assert_eq!(union_probs(&p, &zero).unwrap(), p);
        assert_eq!(union_probs(&zero, &zero).unwrap(), zero);
        assert!((union_probs(&p, &p).unwrap().at(0, 1) - 0.75).abs() < 1e-15);

        let mut one = Mat::filled(3, 3, 1.0);
        for i in 0..3 {
            one.set(i, i, 0.0);
        }
        let ones = EdgeProbMatrix::new(one).unwrap();
        let u = union_probs(&p, &ones).unwrap();
        assert_eq!(u.at(0, 1), 1.0);
        assert_eq!(u.at(0, 2), 1.0);
    }

    #[test]
    fn union_probs_realizes_the_complement_factorization() {
        // (1 - p) = (1 - pc)(1 - ps) entrywise, to 1e-12.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 8;
        let mut build = || {
            let mut m = Mat::zeros(n, n);
            for u in 0..n {
                for v in (u + 1)..n {
                    let val = rng.gen::<f64>();
                    m.set(u, v, val);
                    m.set(v, u, val);
                }
            }
            EdgeProbMatrix::new(m).unwrap()
        };
        let pc = build();
        let ps = build();
        let u = union_probs(&pc, &ps).unwrap();
        for i in 0..n * n {
            let lhs = 1.0 - u.mat().data[i];
            let rhs = (1.0 - pc.mat().data[i]) * (1.0 - ps.mat().data[i]);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn mask_to_support_keeps_only_observed_edges() {
        let n = 5;
        let mut cycle = Mat::zeros(n, n);
        for i in 0..n {
            let j = (i + 1) % n;
            cycle.set(i, j, 1.0);
            cycle.set(j, i, 1.0);
        }
        let mut nine = Mat::filled(n, n, 0.9);
        for i in 0..n {
            nine.set(i, i, 0.0);
        }
        let p = EdgeProbMatrix::new(nine).unwrap();
        let masked = mask_to_support(&p, &cycle).unwrap();
        for u in 0..n {
            for v in 0..n {
                let expect = if cycle.at(u, v) == 1.0 { 0.9 } else { 0.0 };
                assert_eq!(masked.at(u, v), expect);
            }
        }

        let complete = {
            let mut m = Mat::filled(n, n, 1.0);
            for i in 0..n {
                m.set(i, i, 0.0);
            }
            m
        };
        assert_eq!(mask_to_support(&p, &complete).unwrap(), p);
        assert_eq!(
            mask_to_support(&p, &Mat::zeros(n, n)).unwrap(),
            EdgeProbMatrix::zeros(n)
        );
    }

    #[test]
    fn top_k_edges_selects_by_score_then_lexicographic() {
        let g = path_graph(4, 1);
        let mut score = Mat::zeros(4, 4);
        // edges: (0,1) 0.9, (1,2) 0.9, (2,3) 0.1
        score.set(0, 1, 0.9);
        score.set(1, 0, 0.9);
        score.set(1, 2, 0.9);
        score.set(2, 1, 0.9);
        score.set(2, 3, 0.1);
        score.set(3, 2, 0.1);

        let one = top_k_edges(&score, &g.a, 1).unwrap();
        assert_eq!(one.at(0, 1), 1.0);
        assert_eq!(one.sum(), 2.0);

        assert_eq!(top_k_edges(&score, &g.a, 3).unwrap(), g.a);
        assert_eq!(top_k_edges(&score, &g.a, 0).unwrap().sum(), 0.0);
        assert!(top_k_edges(&score, &g.a, 4).is_err());
    }

    #[test]
    fn top_k_edges_is_idempotent() {
        let g = path_graph(5, 1);
        let mut score = Mat::zeros(5, 5);
        for (idx, (u, v)) in g.edges().into_iter().enumerate() {
            let s = 0.1 * (idx + 1) as f64;
            score.set(u, v, s);
            score.set(v, u, s);
        }
        let picked = top_k_edges(&score, &g.a, 2).unwrap();
        let again = top_k_edges(&score, &picked, 2).unwrap();
        assert_eq!(picked, again);
    }

    fn tiny_dataset(per_class: usize) -> Dataset {
        let mut graphs = Vec::new();
        for i in 0..per_class * 2 {
            let mut g = path_graph(3, 2);
            g.y = i % 2;
            graphs.push(g);
        }
        let count = graphs.len();
        Dataset::new("toy".into(), 2, graphs, Split::all_in_train(count)).unwrap()
    }

    #[test]
    fn split_all_train_ratio_keeps_everything_in_train() {
        let ds = tiny_dataset(10);
        let out = split_dataset(&ds, (1.0, 0.0, 0.0), 3).unwrap();
        assert_eq!(out.split.train.len(), 20);
        assert!(out.split.validation.is_empty());
        assert!(out.split.test.is_empty());
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let ds = tiny_dataset(500);
        let a = split_dataset(&ds, (0.8, 0.1, 0.1), 7).unwrap();
        let b = split_dataset(&ds, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!(a.split, b.split);
        assert_eq!(a.split.train.len(), 800);
        assert_eq!(a.split.validation.len(), 100);
        assert_eq!(a.split.test.len(), 100);
        for part in [&a.split.train, &a.split.validation, &a.split.test] {
            let ones = part.iter().filter(|&&i| a.graphs[i].y == 1).count();
            assert_eq!(ones * 2, part.len());
        }
        let c = split_dataset(&ds, (0.8, 0.1, 0.1), 8).unwrap();
        assert_ne!(a.split, c.split);
    }

    #[test]
    fn split_rejects_bad_ratios_and_empty_classes() {
        let ds = tiny_dataset(5);
        assert!(split_dataset(&ds, (0.5, 0.1, 0.1), 0).is_err());

        let graphs: Vec<Graph> = (0..4).map(|_| path_graph(3, 2)).collect();
        let lonely = Dataset::new("one-class".into(), 2, graphs, Split::all_in_train(4)).unwrap();
        assert!(split_dataset(&lonely, (0.8, 0.1, 0.1), 0).is_err());
    }

    #[test]
    fn dataset_rejects_broken_splits() {
        let graphs: Vec<Graph> = (0..3).map(|_| path_graph(3, 2)).collect();
        let overlap = Split {
            train: vec![0, 1],
            validation: vec![1],
            test: vec![2],
        };
        assert!(Dataset::new("bad".into(), 1, graphs.clone(), overlap).is_err());
        let gap = Split {
            train: vec![0],
            validation: vec![],
            test: vec![2],
        };
        assert!(Dataset::new("bad".into(), 1, graphs, gap).is_err());
    }

    #[test]
    fn graph_invariants_are_enforced() {
        let x = Mat::filled(3, 1, 1.0);
        assert!(Graph::from_edges(x.clone(), &[(0, 0)], 0).is_err());
        assert!(Graph::from_edges(x.clone(), &[(0, 3)], 0).is_err());
        assert!(Graph::from_edges(x.clone(), &[(0, 1), (0, 1)], 0).is_err());

        let g = Graph::from_edges(x.clone(), &[(0, 1)], 0).unwrap();
        let mut gt = Mat::zeros(3, 3);
        gt.set(1, 2, 1.0);
        gt.set(2, 1, 1.0);
        assert!(Graph::new(x, g.a, 0, Some(gt)).is_err());
    }
}
