//! Synthetic benchmark: preferential-attachment base graphs with a house or
//! five-cycle motif attached, labeled by motif type, with ground-truth masks
//! marking the motif's internal edges.

use crate::autodiff::Mat;
use crate::error::{CiderError, Result};
use crate::graph::{split_dataset, Dataset, Graph, Split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotifKind {
    House,
    Cycle5,
}

/// A motif in canonical node order: node 0 is the attachment point.
#[derive(Debug, Clone)]
pub struct MotifSpec {
    pub kind: MotifKind,
    pub edges: Vec<(usize, usize)>,
}

impl MotifSpec {
    /// A 4-cycle 0-1-2-3 with roof node 4 joined to 0 and 1.
    pub fn house() -> Self {
        MotifSpec {
            kind: MotifKind::House,
            edges: vec![(0, 1), (1, 2), (2, 3), (3, 0), (0, 4), (1, 4)],
        }
    }

    pub fn cycle5() -> Self {
        MotifSpec {
            kind: MotifKind::Cycle5,
            edges: vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)],
        }
    }

    pub fn node_count(&self) -> usize {
        5
    }

    pub fn label(&self) -> usize {
        match self.kind {
            MotifKind::House => 0,
            MotifKind::Cycle5 => 1,
        }
    }
}

/// Barabási-Albert adjacency: a complete seed on m nodes, then each arriving
/// node attaches to m distinct existing nodes sampled proportional to degree
/// (uniform among candidates while all remaining degrees are zero).
pub fn generate_ba(n: usize, m: usize, rng: &mut impl Rng) -> Result<Mat> {
    if m == 0 || n <= m {
        return Err(CiderError::contract(format!(
            "preferential attachment needs n > m >= 1, got n={n}, m={m}"
        )));
    }
    let mut a = Mat::zeros(n, n);
    let mut deg = vec![0usize; n];
    let add_edge = |a: &mut Mat, deg: &mut Vec<usize>, u: usize, v: usize| {
        a.set(u, v, 1.0);
        a.set(v, u, 1.0);
        deg[u] += 1;
        deg[v] += 1;
    };
    for i in 0..m {
        for j in (i + 1)..m {
            add_edge(&mut a, &mut deg, i, j);
        }
    }
    for v in m..n {
        // snapshot weights so this arrival's own edges don't bias its picks
        let weights: Vec<usize> = deg[..v].to_vec();
        let mut chosen = vec![false; v];
        for _ in 0..m {
            let total: usize = weights
                .iter()
                .enumerate()
                .filter(|(u, _)| !chosen[*u])
                .map(|(_, w)| *w)
                .sum();
            let pick = if total == 0 {
                let open: Vec<usize> = (0..v).filter(|&u| !chosen[u]).collect();
                open[rng.gen_range(0..open.len())]
            } else {
                let mut roll = rng.gen_range(0..total);
                let mut found = None;
                for u in 0..v {
                    if chosen[u] {
                        continue;
                    }
                    if roll < weights[u] {
                        found = Some(u);
                        break;
                    }
                    roll -= weights[u];
                }
                found.expect("roll stays below the remaining weight total")
            };
            chosen[pick] = true;
            add_edge(&mut a, &mut deg, v, pick);
        }
    }
    Ok(a)
}

/// Append the motif after the base nodes and bridge a uniformly chosen base
/// node to motif node 0. The ground-truth mask holds exactly the motif's
/// internal edges; the bridge is not part of the explanation.
pub fn attach_motif(base: &Mat, spec: &MotifSpec, rng: &mut impl Rng) -> Result<(Mat, Mat)> {
    if base.rows == 0 {
        return Err(CiderError::contract("motif attachment needs a nonempty base"));
    }
    if base.rows != base.cols || !base.is_symmetric() {
        return Err(CiderError::contract(
            "motif attachment needs a square symmetric base adjacency",
        ));
    }
    let nb = base.rows;
    let n = nb + spec.node_count();
    let mut a = Mat::zeros(n, n);
    let mut gt = Mat::zeros(n, n);
    for i in 0..nb {
        for j in 0..nb {
            a.set(i, j, base.at(i, j));
        }
    }
    for &(u, v) in &spec.edges {
        a.set(nb + u, nb + v, 1.0);
        a.set(nb + v, nb + u, 1.0);
        gt.set(nb + u, nb + v, 1.0);
        gt.set(nb + v, nb + u, 1.0);
    }
    let anchor = rng.gen_range(0..nb);
    a.set(anchor, nb, 1.0);
    a.set(nb, anchor, 1.0);
    Ok((a, gt))
}

/// The two-motif benchmark: `count` preferential-attachment bases, the first
/// half carrying houses (label 0) and the second half five-cycles (label 1),
/// all-ones 10-dimensional node features, stratified 80/10/10 split. Each
/// graph draws from its own stream `seed ^ index`.
pub fn generate_ba2motif(count: usize, base_n: usize, base_m: usize, seed: u64) -> Result<Dataset> {
    if count == 0 || count % 2 != 0 {
        return Err(CiderError::contract(format!(
            "the benchmark needs a positive even graph count, got {count}"
        )));
    }
    let mut graphs = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ i as u64);
        let base = generate_ba(base_n, base_m, &mut rng)?;
        let spec = if i < count / 2 {
            MotifSpec::house()
        } else {
            MotifSpec::cycle5()
        };
        let (a, gt) = attach_motif(&base, &spec, &mut rng)?;
        let x = Mat::filled(base_n + spec.node_count(), 10, 1.0);
        graphs.push(Graph::new(x, a, spec.label(), Some(gt))?);
    }
    let ds = Dataset::new(
        "ba2motif".into(),
        2,
        graphs,
        Split::all_in_train(count),
    )?;
    split_dataset(&ds, (0.8, 0.1, 0.1), seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::upper_triangle_edges;

    fn connected(a: &Mat) -> bool {
        let n = a.rows;
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if a.at(u, v) == 1.0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    #[test]
    fn ba_seed_plus_one_node_is_complete() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = generate_ba(4, 3, &mut rng).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(a.at(i, j), if i == j { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn ba_with_m_one_is_a_tree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = generate_ba(20, 1, &mut rng).unwrap();
        assert_eq!(upper_triangle_edges(&a).len(), 19);
        assert!(connected(&a));
    }

    #[test]
    fn ba_rejects_bad_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(generate_ba(5, 0, &mut rng).is_err());
        assert!(generate_ba(3, 3, &mut rng).is_err());
        assert!(generate_ba(3, 4, &mut rng).is_err());
    }

    fn max_degree(a: &Mat) -> usize {
        (0..a.rows)
            .map(|i| (0..a.cols).filter(|&j| a.at(i, j) == 1.0).count())
            .max()
            .unwrap()
    }

    fn uniform_tree(n: usize, rng: &mut impl Rng) -> Mat {
        let mut a = Mat::zeros(n, n);
        for v in 1..n {
            let u = rng.gen_range(0..v);
            a.set(u, v, 1.0);
            a.set(v, u, 1.0);
        }
        a
    }

    #[test]
    fn preferential_attachment_grows_larger_hubs_than_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let draws = 1000;
        let mut ba_sum = 0.0;
        let mut uni_sum = 0.0;
        for _ in 0..draws {
            ba_sum += max_degree(&generate_ba(100, 1, &mut rng).unwrap()) as f64;
            uni_sum += max_degree(&uniform_tree(100, &mut rng)) as f64;
        }
        let ba_mean = ba_sum / draws as f64;
        let uni_mean = uni_sum / draws as f64;
        assert!(
            ba_mean > uni_mean + 1.0,
            "max-degree means: preferential {ba_mean}, uniform {uni_mean}"
        );
    }

    #[test]
    fn motif_specs_match_their_definitions() {
        let house = MotifSpec::house();
        assert_eq!(house.edges, vec![(0, 1), (1, 2), (2, 3), (3, 0), (0, 4), (1, 4)]);
        assert_eq!(house.label(), 0);
        let cycle = MotifSpec::cycle5();
        assert_eq!(cycle.edges.len(), 5);
        assert_eq!(cycle.label(), 1);
        // cycle visits every node exactly twice
        let mut deg = [0usize; 5];
        for &(u, v) in &cycle.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        assert_eq!(deg, [2, 2, 2, 2, 2]);
    }

    #[test]
    fn attach_motif_counts_and_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = generate_ba(20, 1, &mut rng).unwrap();
        let base_edges = upper_triangle_edges(&base).len();

        let (a, gt) = attach_motif(&base, &MotifSpec::cycle5(), &mut rng).unwrap();
        assert_eq!(a.rows, 25);
        assert_eq!(upper_triangle_edges(&a).len(), base_edges + 5 + 1);
        assert_eq!(upper_triangle_edges(&gt).len(), 5);

        let (a2, gt2) = attach_motif(&base, &MotifSpec::house(), &mut rng).unwrap();
        assert_eq!(upper_triangle_edges(&a2).len(), base_edges + 6 + 1);
        assert_eq!(upper_triangle_edges(&gt2).len(), 6);
        // mask stays within the adjacency
        for i in 0..25 {
            for j in 0..25 {
                assert!(gt2.at(i, j) <= a2.at(i, j));
            }
        }
    }

    #[test]
    fn bridge_endpoint_varies_across_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let base = generate_ba(20, 1, &mut rng).unwrap();
        let mut anchors = std::collections::HashSet::new();
        for _ in 0..100 {
            let (a, gt) = attach_motif(&base, &MotifSpec::house(), &mut rng).unwrap();
            for u in 0..20 {
                if a.at(u, 20) == 1.0 && gt.at(u, 20) == 0.0 {
                    anchors.insert(u);
                }
            }
        }
        assert!(anchors.len() > 1, "bridge always landed on the same node");
    }

    #[test]
    fn benchmark_dataset_shape_and_labels() {
        let ds = generate_ba2motif(40, 20, 1, 7).unwrap();
        assert_eq!(ds.graphs.len(), 40);
        assert_eq!(ds.class_count, 2);
        let mut per_class = [0usize; 2];
        for g in &ds.graphs {
            per_class[g.y] += 1;
            assert_eq!(g.n, 25);
            assert_eq!(g.feature_dim(), 10);
            assert!(g.x.data.iter().all(|&v| v == 1.0));
            let gt = g.gt_mask.as_ref().unwrap();
            // label is recoverable from the mask's edge count
            let motif_edges = upper_triangle_edges(gt).len();
            assert_eq!(motif_edges, if g.y == 0 { 6 } else { 5 });
            for i in 0..g.n {
                for j in 0..g.n {
                    assert!(gt.at(i, j) <= g.a.at(i, j));
                }
            }
        }
        assert_eq!(per_class, [20, 20]);
        assert_eq!(ds.split.train.len(), 32);
        assert_eq!(ds.split.validation.len(), 4);
        assert_eq!(ds.split.test.len(), 4);
    }

    #[test]
    fn benchmark_is_deterministic_per_seed() {
        let a = generate_ba2motif(10, 20, 1, 99).unwrap();
        let b = generate_ba2motif(10, 20, 1, 99).unwrap();
        for (ga, gb) in a.graphs.iter().zip(b.graphs.iter()) {
            assert_eq!(ga.a, gb.a);
            assert_eq!(ga.gt_mask, gb.gt_mask);
        }
        assert_eq!(a.split.train, b.split.train);
        let c = generate_ba2motif(10, 20, 1, 100).unwrap();
        let same = a
            .graphs
            .iter()
            .zip(c.graphs.iter())
            .all(|(ga, gc)| ga.a == gc.a);
        assert!(!same, "different seeds produced identical graphs");
    }

    #[test]
    fn benchmark_rejects_odd_or_empty_counts() {
        assert!(generate_ba2motif(7, 20, 1, 0).is_err());
        assert!(generate_ba2motif(0, 20, 1, 0).is_err());
    }
}
