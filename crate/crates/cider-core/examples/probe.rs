//! Throwaway diagnostic: pooling variants vs motif-only generalization.

use cider_core::autodiff::Mat;
use cider_core::checkpoint::load_task_checkpoint;
use cider_core::data::json::load_dataset;
use cider_core::gnn::{Activation, TaskModel};
use cider_core::graph::normalize_adjacency;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

fn walk_subgraph(a: &Mat, keep_fraction: f64, rng: &mut ChaCha8Rng) -> Mat {
    let n = a.rows;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut total = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            if a.at(i, j) != 0.0 {
                adj[i].push(j);
                adj[j].push(i);
                total += 1;
            }
        }
    }
    if total == 0 {
        return a.clone();
    }
    let target = ((keep_fraction * total as f64).round() as usize).clamp(1, total);
    if target == total {
        return a.clone();
    }
    let starts: Vec<usize> = (0..n).filter(|&i| !adj[i].is_empty()).collect();
    let mut out = Mat::zeros(n, n);
    let mut kept = 0usize;
    let mut visited: Vec<usize> = vec![starts[rng.gen_range(0..starts.len())]];
    let mut cur = visited[0];
    let mut stall = 0usize;
    while kept < target && stall < 50 * target {
        stall += 1;
        if rng.gen_bool(0.15) {
            cur = visited[rng.gen_range(0..visited.len())];
        } else if rng.gen_bool(0.05) {
            cur = starts[rng.gen_range(0..starts.len())];
        }
        let next = adj[cur][rng.gen_range(0..adj[cur].len())];
        let (i, j) = (cur.min(next), cur.max(next));
        if out.at(i, j) == 0.0 {
            out.set(i, j, a.at(i, j));
            out.set(j, i, a.at(j, i));
            visited.push(next);
            kept += 1;
        }
        cur = next;
    }
    out
}

#[derive(Clone, Copy, Debug)]
enum Pool {
    Mean,
    ActiveMean,
    DegreeWeighted,
    Max,
    ActiveMax,
}

fn hidden(model: &TaskModel, x: &Mat, a: &Mat) -> Mat {
    let ahat = normalize_adjacency(a).unwrap();
    let mut h = x.clone();
    for layer in &model.layers {
        let mut mixed = ahat.matmul(&h).unwrap().matmul(&layer.w).unwrap();
        for i in 0..mixed.rows {
            for j in 0..mixed.cols {
                mixed.set(i, j, mixed.at(i, j) + layer.b.at(0, j));
            }
        }
        h = match layer.activation {
            Activation::Relu => mixed.map(|v| v.max(0.0)),
            Activation::Identity => mixed,
        };
    }
    h
}

fn rep(model: &TaskModel, x: &Mat, a: &Mat, pool: Pool) -> Vec<f64> {
    let h = hidden(model, x, a);
    let n = h.rows;
    let d = h.cols;
    let deg: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a.at(i, j)).sum()).collect();
    let mut out = vec![0.0; d];
    match pool {
        Pool::Mean => {
            for i in 0..n {
                for k in 0..d {
                    out[k] += h.at(i, k) / n as f64;
                }
            }
        }
        Pool::ActiveMean => {
            let active: Vec<usize> = (0..n).filter(|&i| deg[i] > 0.0).collect();
            let m = active.len().max(1) as f64;
            for &i in &active {
                for k in 0..d {
                    out[k] += h.at(i, k) / m;
                }
            }
        }
        Pool::DegreeWeighted => {
            let total: f64 = deg.iter().sum::<f64>().max(1e-12);
            for i in 0..n {
                for k in 0..d {
                    out[k] += deg[i] * h.at(i, k) / total;
                }
            }
        }
        Pool::Max => {
            for k in 0..d {
                out[k] = (0..n).map(|i| h.at(i, k)).fold(f64::NEG_INFINITY, f64::max);
            }
        }
        Pool::ActiveMax => {
            let active: Vec<usize> = (0..n).filter(|&i| deg[i] > 0.0).collect();
            for k in 0..d {
                out[k] = active
                    .iter()
                    .map(|&i| h.at(i, k))
                    .fold(0.0f64, f64::max);
            }
        }
    }
    out
}

struct Logistic {
    w: Vec<Vec<f64>>,
    b: [f64; 2],
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Logistic {
    fn fit(feats: &[Vec<f64>], labels: &[usize], iters: usize) -> Logistic {
        let n = feats.len();
        let d = feats[0].len();
        let mut mean = vec![0.0; d];
        let mut std = vec![0.0; d];
        for f in feats {
            for k in 0..d {
                mean[k] += f[k] / n as f64;
            }
        }
        for f in feats {
            for k in 0..d {
                std[k] += (f[k] - mean[k]).powi(2) / n as f64;
            }
        }
        for s in &mut std {
            *s = s.sqrt().max(1e-8);
        }
        let z: Vec<Vec<f64>> = feats
            .iter()
            .map(|f| (0..d).map(|k| (f[k] - mean[k]) / std[k]).collect())
            .collect();
        let mut w = vec![vec![0.0; 2]; d];
        let mut b = [0.0; 2];
        for _ in 0..iters {
            let mut gw = vec![vec![0.0; 2]; d];
            let mut gb = [0.0; 2];
            for (f, &y) in z.iter().zip(labels) {
                let mut logit = [b[0], b[1]];
                for k in 0..d {
                    logit[0] += f[k] * w[k][0];
                    logit[1] += f[k] * w[k][1];
                }
                let m = logit[0].max(logit[1]);
                let e0 = (logit[0] - m).exp();
                let e1 = (logit[1] - m).exp();
                let p = [e0 / (e0 + e1), e1 / (e0 + e1)];
                for c in 0..2 {
                    let err = (p[c] - if c == y { 1.0 } else { 0.0 }) / n as f64;
                    gb[c] += err;
                    for k in 0..d {
                        gw[k][c] += err * f[k];
                    }
                }
            }
            for c in 0..2 {
                b[c] -= 2.0 * gb[c];
                for k in 0..d {
                    w[k][c] -= 2.0 * (gw[k][c] + 1e-5 * w[k][c]);
                }
            }
        }
        Logistic { w, b, mean, std }
    }

    fn predict(&self, f: &[f64]) -> usize {
        let mut logit = [self.b[0], self.b[1]];
        for k in 0..f.len() {
            let v = (f[k] - self.mean[k]) / self.std[k];
            logit[0] += v * self.w[k][0];
            logit[1] += v * self.w[k][1];
        }
        (logit[1] > logit[0]) as usize
    }
}

fn main() {
    let ds = load_dataset(Path::new("/tmp/smoke/ds1k")).unwrap();
    let model = load_task_checkpoint(Path::new("/tmp/smoke/task1k/task-checkpoint.json")).unwrap();

    for pool in [
        Pool::Mean,
        Pool::ActiveMean,
        Pool::DegreeWeighted,
        Pool::Max,
        Pool::ActiveMax,
    ] {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        // training features
        let mut clean_f = Vec::new();
        let mut clean_y = Vec::new();
        let mut joint_f = Vec::new();
        let mut joint_y = Vec::new();
        for &i in &ds.split.train {
            let g = &ds.graphs[i];
            let r = rep(&model, &g.x, &g.a, pool);
            clean_f.push(r.clone());
            clean_y.push(g.y);
            joint_f.push(r);
            joint_y.push(g.y);
            if let Some(mask) = &g.gt_mask {
                joint_f.push(rep(&model, &g.x, mask, pool));
                joint_y.push(g.y);
            }
        }
        let head_clean = Logistic::fit(&clean_f, &clean_y, 8000);
        let head_joint = Logistic::fit(&joint_f, &joint_y, 8000);

        // evaluation sets
        let eval = |head: &Logistic| -> (f64, f64, f64) {
            let mut c = 0.0;
            let mut g_acc = 0.0;
            let mut gn = 0.0;
            let mut v = 0.0;
            let mut vn = 0.0;
            let mut vrng = ChaCha8Rng::seed_from_u64(7);
            for &i in &ds.split.validation {
                let g = &ds.graphs[i];
                c += (head.predict(&rep(&model, &g.x, &g.a, pool)) == g.y) as usize as f64;
                if let Some(mask) = &g.gt_mask {
                    g_acc +=
                        (head.predict(&rep(&model, &g.x, mask, pool)) == g.y) as usize as f64;
                    gn += 1.0;
                }
                let view = walk_subgraph(&g.a, 0.25, &mut vrng);
                v += (head.predict(&rep(&model, &g.x, &view, pool)) == g.y) as usize as f64;
                vn += 1.0;
            }
            (
                c / ds.split.validation.len() as f64,
                g_acc / gn,
                v / vn,
            )
        };
        let (cc, cg, cv) = eval(&head_clean);
        let (jc, jg, jv) = eval(&head_joint);
        println!(
            "{pool:?}: clean-trained [clean {cc:.3} gt {cg:.3} views {cv:.3}]  joint-trained [clean {jc:.3} gt {jg:.3} views {jv:.3}]"
        );

        // the legit recipe: clean + small walk views, no gt anywhere
        for (lo, hi) in [(0.15, 0.4), (0.15, 0.9)] {
            let mut vf = clean_f.clone();
            let mut vy = clean_y.clone();
            for &i in &ds.split.train {
                let g = &ds.graphs[i];
                for _ in 0..3 {
                    let keep = rng.gen_range(lo..hi);
                    let view = walk_subgraph(&g.a, keep, &mut rng);
                    vf.push(rep(&model, &g.x, &view, pool));
                    vy.push(g.y);
                }
            }
            let head_views = Logistic::fit(&vf, &vy, 8000);
            let (vc, vg, vv) = eval(&head_views);
            println!(
                "  views U({lo},{hi}): clean {vc:.3} gt {vg:.3} views {vv:.3}"
            );
        }
    }
}
