//! Two-channel variational graph autoencoder: a shared GCN encoder feeding a
//! causal Gaussian head and a spurious head conditioned on the causal draw,
//! inner-product edge decoders, counterfactual assembly, and the four loss
//! terms of the training objective.

use crate::autodiff::{Mat, Tape, Tensor};
use crate::error::{CiderError, Result};
use crate::gnn::{gcn_forward, Activation, BoundTaskModel, GcnLayer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Encoder log-variances are clamped to this symmetric range.
pub const LOG_VAR_CLAMP: f64 = 10.0;

/// A diagonal Gaussian over node latents, on the tape.
#[derive(Debug, Clone, Copy)]
pub struct LatentPair {
    pub mu: Tensor,
    pub log_var: Tensor,
}

/// All trainable explainer weights. One GCN layer per block: the shared
/// encoder, two causal-head outputs, and two spurious-head outputs over the
/// concatenation of the shared features with the causal draw.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CiderParams {
    pub shared: GcnLayer,
    pub causal_mu: GcnLayer,
    pub causal_lv: GcnLayer,
    pub spurious_mu: GcnLayer,
    pub spurious_lv: GcnLayer,
    pub latent: usize,
    pub trained_steps: u64,
}

pub struct BoundCiderParams {
    pub shared: (Tensor, Tensor, Activation),
    pub causal_mu: (Tensor, Tensor),
    pub causal_lv: (Tensor, Tensor),
    pub spurious_mu: (Tensor, Tensor),
    pub spurious_lv: (Tensor, Tensor),
}

impl BoundCiderParams {
    pub fn parameter_tensors(&self) -> Vec<Tensor> {
        vec![
            self.shared.0,
            self.shared.1,
            self.causal_mu.0,
            self.causal_mu.1,
            self.causal_lv.0,
            self.causal_lv.1,
            self.spurious_mu.0,
            self.spurious_mu.1,
            self.spurious_lv.0,
            self.spurious_lv.1,
        ]
    }
}

fn glorot(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let mut m = Mat::zeros(rows, cols);
    for v in m.data.iter_mut() {
        *v = rng.gen_range(-a..a);
    }
    m
}

/// Bias rows start in U(-1/sqrt(fan_in), +1/sqrt(fan_in)) rather than at zero:
/// with strictly positive propagated features a zero bias leaves every relu
/// unit dead or exactly linear, which stalls training on constant-feature
/// graphs.
fn bias_init(rng: &mut impl Rng, fan_in: usize, cols: usize) -> Mat {
    let a = 1.0 / (fan_in as f64).sqrt();
    let mut m = Mat::zeros(1, cols);
    for v in m.data.iter_mut() {
        *v = rng.gen_range(-a..a);
    }
    m
}

impl CiderParams {
    pub fn init(d: usize, hidden: usize, latent: usize, seed: u64) -> Result<Self> {
        if d == 0 || hidden == 0 || latent == 0 {
            return Err(CiderError::contract(
                "explainer needs nonzero feature, hidden, and latent widths",
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layer = |rng: &mut ChaCha8Rng, h_in: usize, h_out: usize, act: Activation| {
            GcnLayer {
                w: glorot(rng, h_in, h_out),
                b: bias_init(rng, h_in, h_out),
                activation: act,
            }
        };
        Ok(CiderParams {
            shared: layer(&mut rng, d, hidden, Activation::Relu),
            causal_mu: layer(&mut rng, hidden, latent, Activation::Identity),
            causal_lv: layer(&mut rng, hidden, latent, Activation::Identity),
            spurious_mu: layer(&mut rng, hidden + latent, latent, Activation::Identity),
            spurious_lv: layer(&mut rng, hidden + latent, latent, Activation::Identity),
            latent,
            trained_steps: 0,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.shared.w.rows
    }

    pub fn hidden_dim(&self) -> usize {
        self.shared.w.cols
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundCiderParams {
        let put = |tape: &mut Tape, m: &Mat| {
            if trainable {
                tape.leaf(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        BoundCiderParams {
            shared: (
                put(tape, &self.shared.w),
                put(tape, &self.shared.b),
                self.shared.activation,
            ),
            causal_mu: (put(tape, &self.causal_mu.w), put(tape, &self.causal_mu.b)),
            causal_lv: (put(tape, &self.causal_lv.w), put(tape, &self.causal_lv.b)),
            spurious_mu: (
                put(tape, &self.spurious_mu.w),
                put(tape, &self.spurious_mu.b),
            ),
            spurious_lv: (
                put(tape, &self.spurious_lv.w),
                put(tape, &self.spurious_lv.b),
            ),
        }
    }

    /// Stable parameter order shared with `bind` and the optimizer.
    pub fn parameters_mut(&mut self) -> Vec<&mut Mat> {
        vec![
            &mut self.shared.w,
            &mut self.shared.b,
            &mut self.causal_mu.w,
            &mut self.causal_mu.b,
            &mut self.causal_lv.w,
            &mut self.causal_lv.b,
            &mut self.spurious_mu.w,
            &mut self.spurious_mu.b,
            &mut self.spurious_lv.w,
            &mut self.spurious_lv.b,
        ]
    }
}

/// H = act(Â·X·W_shared); relu in the standard configuration.
pub fn encode_shared(
    tape: &mut Tape,
    params: &BoundCiderParams,
    x: Tensor,
    ahat: Tensor,
) -> Result<Tensor> {
    gcn_forward(tape, ahat, x, params.shared.0, params.shared.1, params.shared.2)
}

/// Causal posterior: mu = Â·H·W_mu, log_var = clamp(Â·H·W_lv).
pub fn infer_causal(
    tape: &mut Tape,
    params: &BoundCiderParams,
    h: Tensor,
    ahat: Tensor,
) -> Result<LatentPair> {
    let mu = gcn_forward(
        tape,
        ahat,
        h,
        params.causal_mu.0,
        params.causal_mu.1,
        Activation::Identity,
    )?;
    let lv_raw = gcn_forward(
        tape,
        ahat,
        h,
        params.causal_lv.0,
        params.causal_lv.1,
        Activation::Identity,
    )?;
    let log_var = tape.clamp(lv_raw, -LOG_VAR_CLAMP, LOG_VAR_CLAMP)?;
    Ok(LatentPair { mu, log_var })
}

/// Spurious posterior conditioned on the causal draw: the heads read the
/// column-concatenation [H | z_c].
pub fn infer_spurious(
    tape: &mut Tape,
    params: &BoundCiderParams,
    h: Tensor,
    z_c: Tensor,
    ahat: Tensor,
) -> Result<LatentPair> {
    let cat = tape.concat_cols(h, z_c)?;
    let mu = gcn_forward(
        tape,
        ahat,
        cat,
        params.spurious_mu.0,
        params.spurious_mu.1,
        Activation::Identity,
    )?;
    let lv_raw = gcn_forward(
        tape,
        ahat,
        cat,
        params.spurious_lv.0,
        params.spurious_lv.1,
        Activation::Identity,
    )?;
    let log_var = tape.clamp(lv_raw, -LOG_VAR_CLAMP, LOG_VAR_CLAMP)?;
    Ok(LatentPair { mu, log_var })
}

/// z = mu + exp(log_var/2) ∘ eps with eps ~ N(0, I) drawn here; the result is
/// differentiable through mu and log_var.
pub fn reparam_sample(tape: &mut Tape, g: &LatentPair, rng: &mut impl Rng) -> Result<Tensor> {
    let mut eps = Mat::zeros(g.mu.rows, g.mu.cols);
    for v in eps.data.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    let eps = tape.constant(eps);
    let half_lv = tape.scalar_mul(g.log_var, 0.5)?;
    let sd = tape.exp(half_lv)?;
    let scaled = tape.mul(sd, eps)?;
    tape.add(g.mu, scaled)
}

/// P = sigmoid(z·zᵀ) with the diagonal zeroed; symmetric by construction.
pub fn decode_inner_product(tape: &mut Tape, z: Tensor) -> Result<Tensor> {
    let zt = tape.transpose(z)?;
    let gram = tape.matmul(z, zt)?;
    let sig = tape.sigmoid(gram)?;
    let mut hollow = Mat::filled(z.rows, z.rows, 1.0);
    for i in 0..z.rows {
        hollow.set(i, i, 0.0);
    }
    tape.mask(sig, &hollow)
}

/// Probabilistic OR on the tape: 1 - (1 - pc)(1 - ps).
pub fn union_probs_on_tape(tape: &mut Tape, pc: Tensor, ps: Tensor) -> Result<Tensor> {
    let nc = tape.scalar_mul(pc, -1.0)?;
    let one_minus_pc = tape.scalar_add(nc, 1.0)?;
    let ns = tape.scalar_mul(ps, -1.0)?;
    let one_minus_ps = tape.scalar_add(ns, 1.0)?;
    let both_absent = tape.mul(one_minus_pc, one_minus_ps)?;
    let neg = tape.scalar_mul(both_absent, -1.0)?;
    tape.scalar_add(neg, 1.0)
}

/// CF = (Pc ∪ Ps_draw) restricted to the observed support. The causal channel
/// stays soft for gradient flow; Ps_draw is a fresh decode of a new spurious
/// sample.
pub fn make_counterfactual(tape: &mut Tape, pc: Tensor, ps_draw: Tensor, a: &Mat) -> Result<Tensor> {
    let union = union_probs_on_tape(tape, pc, ps_draw)?;
    tape.mask(union, a)
}

/// Sum over counterfactual samples of the entrywise L1 gap between the pooled
/// representation on CF and on the full graph.
pub fn loss_l1_model(
    tape: &mut Tape,
    task: &BoundTaskModel,
    x: Tensor,
    a: Tensor,
    cf_list: &[Tensor],
) -> Result<Tensor> {
    let (rep_full, _) = crate::gnn::task_forward_on_tape(tape, task, x, a)?;
    let mut acc: Option<Tensor> = None;
    for &cf in cf_list {
        let (rep_cf, _) = crate::gnn::task_forward_on_tape(tape, task, x, cf)?;
        let diff = tape.sub(rep_cf, rep_full)?;
        let gap = tape.abs(diff)?;
        let s = tape.sum(gap)?;
        acc = Some(match acc {
            Some(prev) => tape.add(prev, s)?,
            None => s,
        });
    }
    match acc {
        Some(t) => Ok(t),
        None => Ok(tape.constant(Mat::zeros(1, 1))),
    }
}

/// Sum over counterfactual samples of the cross-entropy between the logits on
/// CF and the observed label.
pub fn loss_l1_phenomenon(
    tape: &mut Tape,
    task: &BoundTaskModel,
    x: Tensor,
    cf_list: &[Tensor],
    y: usize,
) -> Result<Tensor> {
    let mut acc: Option<Tensor> = None;
    for &cf in cf_list {
        let (_, logits) = crate::gnn::task_forward_on_tape(tape, task, x, cf)?;
        let ce = tape.softmax_cross_entropy(logits, y)?;
        acc = Some(match acc {
            Some(prev) => tape.add(prev, ce)?,
            None => ce,
        });
    }
    match acc {
        Some(t) => Ok(t),
        None => Ok(tape.constant(Mat::zeros(1, 1))),
    }
}

fn kld_one_channel(tape: &mut Tape, g: &LatentPair) -> Result<Tensor> {
    let var = tape.exp(g.log_var)?;
    let mu2 = tape.mul(g.mu, g.mu)?;
    let s1 = tape.add(var, mu2)?;
    let s2 = tape.scalar_add(s1, -1.0)?;
    let term = tape.sub(s2, g.log_var)?;
    let total = tape.sum(term)?;
    tape.scalar_mul(total, 0.5)
}

/// KL(N(mu, diag(exp(lv))) || N(0, I)) summed over nodes and dimensions for
/// both channels, normalized by the node count.
pub fn loss_kld(tape: &mut Tape, gc: &LatentPair, gs: &LatentPair) -> Result<Tensor> {
    let n = gc.mu.rows.max(1) as f64;
    let kc = kld_one_channel(tape, gc)?;
    let ks = kld_one_channel(tape, gs)?;
    let both = tape.add(kc, ks)?;
    tape.scalar_mul(both, 1.0 / n)
}

/// Weighted BCE between the unmasked union decode and the observed adjacency,
/// over all node pairs, positive weight n²/(2|E|), mean-reduced.
pub fn loss_reconstruction(tape: &mut Tape, p_union: Tensor, a: &Mat) -> Result<Tensor> {
    let edge_entries = a.sum();
    if edge_entries == 0.0 {
        return Err(CiderError::contract(
            "reconstruction weight is undefined on an edgeless graph",
        ));
    }
    let n = a.rows as f64;
    let pos_weight = n * n / edge_entries;
    tape.weighted_bce(p_union, a, pos_weight)
}

pub fn one_hot(class: usize, class_count: usize) -> Result<Mat> {
    if class >= class_count {
        return Err(CiderError::contract(format!(
            "class {class} out of range for {class_count} classes"
        )));
    }
    let mut m = Mat::zeros(1, class_count);
    m.data[class] = 1.0;
    Ok(m)
}

/// MSE between the softmax class probabilities on (X, causal channel masked
/// to the observed support) and the one-hot label; keeps the spurious channel
/// from absorbing everything.
pub fn loss_task(
    tape: &mut Tape,
    task: &BoundTaskModel,
    pc_masked: Tensor,
    x: Tensor,
    y: usize,
    class_count: usize,
) -> Result<Tensor> {
    let (_, logits) = crate::gnn::task_forward_on_tape(tape, task, x, pc_masked)?;
    let probs = tape.row_softmax(logits)?;
    let target = one_hot(y, class_count)?;
    tape.mse(probs, &target)
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l1: f64,
    pub kld: f64,
    pub recon: f64,
    pub task: f64,
    pub total: f64,
}

/// total = l1 + kld + recon + lambda_task·task, with every part checked
/// finite and the offender named on failure.
pub fn total_loss(
    tape: &mut Tape,
    l1: Tensor,
    kld: Tensor,
    recon: Tensor,
    task: Tensor,
    lambda_task: f64,
) -> Result<(Tensor, LossBreakdown)> {
    let parts = [("l1", l1), ("kld", kld), ("recon", recon), ("task", task)];
    for (name, t) in parts {
        if !t.is_scalar() {
            return Err(CiderError::contract(format!("loss part {name} is not scalar")));
        }
        if !tape.value(t).data[0].is_finite() {
            return Err(CiderError::Numeric {
                op: format!("total_loss: {name}"),
            });
        }
    }
    let weighted_task = tape.scalar_mul(task, lambda_task)?;
    let a = tape.add(l1, kld)?;
    let b = tape.add(recon, weighted_task)?;
    let total = tape.add(a, b)?;
    let breakdown = LossBreakdown {
        l1: tape.value(l1).data[0],
        kld: tape.value(kld).data[0],
        recon: tape.value(recon).data[0],
        task: tape.value(task).data[0],
        total: tape.value(total).data[0],
    };
    Ok((total, breakdown))
}

/// Plain scalar weighted BCE used for logged diagnostics outside the tape.
pub fn weighted_bce_plain(pred: &Mat, target: &Mat, pos_weight: f64) -> Result<f64> {
    if !pred.same_shape(target) {
        return Err(CiderError::dim(
            "weighted_bce",
            format!(
                "{}x{} vs {}x{}",
                pred.rows, pred.cols, target.rows, target.cols
            ),
        ));
    }
    let floor = crate::autodiff::LOG_FLOOR;
    let mut acc = 0.0;
    for (&p, &t) in pred.data.iter().zip(target.data.iter()) {
        let ph = p.clamp(floor, 1.0 - floor);
        acc -= pos_weight * t * ph.ln() + (1.0 - t) * (1.0 - ph).ln();
    }
    Ok(acc / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, AdamConfig, AdamState};
    use crate::gnn::TaskModel;
    use crate::graph::{normalize_adjacency, normalize_adjacency_on_tape, Graph};

    fn tiny_params(seed: u64) -> CiderParams {
        CiderParams::init(2, 3, 2, seed).unwrap()
    }

    fn unbiased(mut p: CiderParams) -> CiderParams {
        for layer in [
            &mut p.shared,
            &mut p.causal_mu,
            &mut p.causal_lv,
            &mut p.spurious_mu,
            &mut p.spurious_lv,
        ] {
            layer.b = Mat::zeros(1, layer.b.cols);
        }
        p
    }

    fn scaled(mut p: CiderParams, f: f64) -> CiderParams {
        for w in p.parameters_mut() {
            for v in w.data.iter_mut() {
                *v *= f;
            }
        }
        p
    }

    fn triangle() -> Graph {
        Graph::from_edges(Mat::filled(3, 2, 1.0), &[(0, 1), (1, 2), (0, 2)], 0).unwrap()
    }

    #[test]
    fn encode_shared_zero_features_give_zero_h() {
        let params = unbiased(tiny_params(1));
        let g = triangle();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false);
        let x = tape.constant(Mat::zeros(3, 2));
        let a = tape.constant(g.a.clone());
        let ahat = normalize_adjacency_on_tape(&mut tape, a).unwrap();
        let h = encode_shared(&mut tape, &bound, x, ahat).unwrap();
        assert_eq!(tape.value(h).sum(), 0.0);
    }

    #[test]
    fn encode_shared_identity_config_passes_features_through() {
        let mut params = tiny_params(1);
        params.shared = GcnLayer::new(Mat::eye(2), Activation::Identity);
        let x_val = Mat::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false);
        let x = tape.constant(x_val.clone());
        let ahat = tape.constant(Mat::eye(2));
        let h = encode_shared(&mut tape, &bound, x, ahat).unwrap();
        assert_eq!(tape.value(h), &x_val);
    }

    #[test]
    fn encode_shared_triangle_matches_hand_product() {
        // Â of a triangle is 1/3 everywhere; X = [1,2,3]ᵀ, W = [2] → H = 4.
        let mut params = unbiased(CiderParams::init(1, 1, 1, 0).unwrap());
        params.shared.w = Mat::from_vec(1, 1, vec![2.0]).unwrap();
        let g = triangle();
        let ahat_val = normalize_adjacency(&g.a).unwrap();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false);
        let x = tape.constant(Mat::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap());
        let ahat = tape.constant(ahat_val);
        let h = encode_shared(&mut tape, &bound, x, ahat).unwrap();
        for v in &tape.value(h).data {
            assert!((v - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn infer_causal_zero_h_is_standard_normal_with_zero_kld() {
        let params = unbiased(tiny_params(2));
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false);
        let h = tape.constant(Mat::zeros(3, 3));
        let ahat = tape.constant(Mat::eye(3));
        let gc = infer_causal(&mut tape, &bound, h, ahat).unwrap();
        assert_eq!(tape.value(gc.mu).sum(), 0.0);
        assert_eq!(tape.value(gc.log_var).sum(), 0.0);

        let gs = LatentPair {
            mu: tape.constant(Mat::zeros(3, 2)),
            log_var: tape.constant(Mat::zeros(3, 2)),
        };
        let kld = loss_kld(&mut tape, &gc, &gs).unwrap();
        assert_eq!(tape.value(kld).data[0], 0.0);
    }

    #[test]
    fn log_var_clamp_engages_at_ten() {
        let params = scaled(tiny_params(3), 1e4);
        let g = triangle();
        let ahat_val = normalize_adjacency(&g.a).unwrap();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false);
        let x = tape.constant(g.x.clone());
        let ahat = tape.constant(ahat_val);
        let h = encode_shared(&mut tape, &bound, x, ahat).unwrap();
        let gc = infer_causal(&mut tape, &bound, h, ahat).unwrap();
        for &v in &tape.value(gc.log_var).data {
            assert!(
                v == LOG_VAR_CLAMP || v == -LOG_VAR_CLAMP,
                "log_var {v} escaped the clamp"
            );
        }
    }

    #[test]
    fn infer_spurious_conditions_on_the_causal_draw() {
        let params = unbiased(tiny_params(4));
        let g = triangle();
        let ahat_val = normalize_adjacency(&g.a).unwrap();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false);
        let x = tape.constant(g.x.clone());
        let ahat = tape.constant(ahat_val);
        let h = encode_shared(&mut tape, &bound, x, ahat).unwrap();
        let z_a = tape.constant(Mat::filled(3, 2, 0.5));
        let z_b = tape.constant(Mat::filled(3, 2, -1.5));
        let gs_a = infer_spurious(&mut tape, &bound, h, z_a, ahat).unwrap();
        let gs_b = infer_spurious(&mut tape, &bound, h, z_b, ahat).unwrap();
        let diff: f64 = tape
            .value(gs_a.mu)
            .data
            .iter()
            .zip(tape.value(gs_b.mu).data.iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(diff > 1e-6, "spurious head ignored z_c");

        // zero H and zero z_c give the standard-normal prior
        let mut tape2 = Tape::new();
        let bound2 = params.bind(&mut tape2, false);
        let h0 = tape2.constant(Mat::zeros(3, 3));
        let z0 = tape2.constant(Mat::zeros(3, 2));
        let ahat2 = tape2.constant(Mat::eye(3));
        let gs0 = infer_spurious(&mut tape2, &bound2, h0, z0, ahat2).unwrap();
        assert_eq!(tape2.value(gs0.mu).sum(), 0.0);
        assert_eq!(tape2.value(gs0.log_var).sum(), 0.0);
    }

    #[test]
    fn infer_spurious_is_permutation_equivariant() {
        let params = tiny_params(6);
        let g = Graph::from_edges(Mat::filled(3, 2, 1.0), &[(0, 1), (1, 2)], 0).unwrap();
        let ahat_val = normalize_adjacency(&g.a).unwrap();
        let h_val = Mat::from_rows(&[vec![1.0, 0.2, -0.3], vec![0.4, 0.5, 0.6], vec![-0.7, 0.8, 0.9]]).unwrap();
        let z_val = Mat::from_rows(&[vec![0.1, 0.2], vec![0.3, -0.4], vec![0.5, 0.6]]).unwrap();

        let run = |h_m: &Mat, z_m: &Mat, ahat_m: &Mat| -> Mat {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape, false);
            let h = tape.constant(h_m.clone());
            let z = tape.constant(z_m.clone());
            let ahat = tape.constant(ahat_m.clone());
            let gs = infer_spurious(&mut tape, &bound, h, z, ahat).unwrap();
            tape.value(gs.mu).clone()
        };

        let base = run(&h_val, &z_val, &ahat_val);
        let perm = [2usize, 0, 1];
        let mut hp = Mat::zeros(3, 3);
        let mut zp = Mat::zeros(3, 2);
        let mut ap = Mat::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                hp.set(perm[i], j, h_val.at(i, j));
                ap.set(perm[i], perm[j], ahat_val.at(i, j));
            }
            for j in 0..2 {
                zp.set(perm[i], j, z_val.at(i, j));
            }
        }
        let permuted = run(&hp, &zp, &ap);
        for i in 0..3 {
            for j in 0..2 {
                assert!((permuted.at(perm[i], j) - base.at(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reparam_collapses_to_mu_at_the_clamp_floor() {
        let mut tape = Tape::new();
        let mu_val = Mat::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        let g = LatentPair {
            mu: tape.constant(mu_val.clone()),
            log_var: tape.constant(Mat::filled(2, 2, -LOG_VAR_CLAMP)),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let z = reparam_sample(&mut tape, &g, &mut rng).unwrap();
        for (zv, mv) in tape.value(z).data.iter().zip(mu_val.data.iter()) {
            // sd = exp(-5), and the standard normal draws stay below 10 sd
            assert!((zv - mv).abs() < 10.0 * (-5.0f64).exp());
        }
    }

    #[test]
    fn reparam_mean_matches_mu_over_many_draws() {
        let mut tape = Tape::new();
        let g = LatentPair {
            mu: tape.constant(Mat::filled(10_000, 1, 1.0)),
            log_var: tape.constant(Mat::zeros(10_000, 1)),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let z = reparam_sample(&mut tape, &g, &mut rng).unwrap();
        let mean = tape.value(z).sum() / 10_000.0;
        assert!((mean - 1.0).abs() < 0.05, "sample mean {mean}");
    }

    #[test]
    fn reparam_is_deterministic_under_a_fixed_seed() {
        let draw = || {
            let mut tape = Tape::new();
            let g = LatentPair {
                mu: tape.constant(Mat::zeros(4, 3)),
                log_var: tape.constant(Mat::zeros(4, 3)),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let z = reparam_sample(&mut tape, &g, &mut rng).unwrap();
            tape.value(z).clone()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn decode_inner_product_oracles() {
        let mut tape = Tape::new();
        let z0 = tape.constant(Mat::zeros(3, 2));
        let p0 = decode_inner_product(&mut tape, z0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 0.0 } else { 0.5 };
                assert_eq!(tape.value(p0).at(i, j), expect);
            }
        }

        // orthogonal rows decode to 0.5; parallel unit rows to sigmoid(1)
        let z = tape.constant(
            Mat::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
        );
        let p = decode_inner_product(&mut tape, z).unwrap();
        assert!((tape.value(p).at(0, 1) - 0.7310585786300049).abs() < 1e-15);
        assert_eq!(tape.value(p).at(0, 2), 0.5);
        assert!(tape.value(p).is_symmetric());
    }

    #[test]
    fn counterfactual_keeps_causal_edges_and_respects_support() {
        let g = triangle();
        let mut tape = Tape::new();

        // Pc = 1 on the support absorbs any spurious draw: CF = A
        let pc_one = tape.constant(g.a.clone());
        let ps_any = tape.constant(Mat::filled(3, 3, 0.3));
        let cf = make_counterfactual(&mut tape, pc_one, ps_any, &g.a).unwrap();
        assert_eq!(tape.value(cf), &g.a);

        // Pc = 0 hands everything to the spurious draw, masked to A
        let pc_zero = tape.constant(Mat::zeros(3, 3));
        let ps = tape.constant(Mat::filled(3, 3, 0.3));
        let cf2 = make_counterfactual(&mut tape, pc_zero, ps, &g.a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if g.a.at(i, j) == 1.0 { 0.3 } else { 0.0 };
                assert!((tape.value(cf2).at(i, j) - expect).abs() < 1e-15);
            }
        }
    }

    fn relu_probe_task_model() -> TaskModel {
        TaskModel {
            layers: vec![GcnLayer::new(
                Mat::from_vec(1, 1, vec![1.0]).unwrap(),
                Activation::Relu,
            )],
            head_w: Mat::from_vec(1, 1, vec![1.0]).unwrap(),
            head_b: Mat::zeros(1, 1),
            class_count: 1,
        }
    }

    #[test]
    fn loss_l1_model_hand_case_and_scaling() {
        // 2-node single-edge graph, X = [1, -1]ᵀ, relu GCN with W = 1:
        // full graph rep = 0; CF with edge weight 0.5 gives rep = 1/6.
        let task = relu_probe_task_model();
        let x_val = Mat::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        let mut a = Mat::zeros(2, 2);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);

        let mut tape = Tape::new();
        let bound = task.bind(&mut tape, false);
        let x = tape.constant(x_val);
        let a_t = tape.constant(a.clone());
        let mut cf_val = Mat::zeros(2, 2);
        cf_val.set(0, 1, 0.5);
        cf_val.set(1, 0, 0.5);
        let cf = tape.constant(cf_val);

        let one = loss_l1_model(&mut tape, &bound, x, a_t, &[cf]).unwrap();
        assert!((tape.value(one).data[0] - 1.0 / 6.0).abs() < 1e-12);

        // identical draws sum, they do not average
        let two = loss_l1_model(&mut tape, &bound, x, a_t, &[cf, cf]).unwrap();
        assert!((tape.value(two).data[0] - 2.0 / 6.0).abs() < 1e-12);

        // CF = A exactly → zero
        let zero = loss_l1_model(&mut tape, &bound, x, a_t, &[a_t]).unwrap();
        assert_eq!(tape.value(zero).data[0], 0.0);
    }

    fn logit_only_task_model(bias: Vec<f64>) -> TaskModel {
        let c = bias.len();
        TaskModel {
            layers: vec![GcnLayer::new(Mat::zeros(2, 2), Activation::Relu)],
            head_w: Mat::zeros(2, c),
            head_b: Mat::from_vec(1, c, bias).unwrap(),
            class_count: c,
        }
    }

    #[test]
    fn loss_l1_phenomenon_oracles() {
        let g = triangle();
        let x_val = Mat::filled(3, 2, 1.0);

        // uniform logits: each sample contributes ln 2
        let task = logit_only_task_model(vec![0.0, 0.0]);
        let mut tape = Tape::new();
        let bound = task.bind(&mut tape, false);
        let x = tape.constant(x_val.clone());
        let cf = tape.constant(g.a.clone());
        let loss = loss_l1_phenomenon(&mut tape, &bound, x, &[cf, cf, cf], 0).unwrap();
        assert!((tape.value(loss).data[0] - 3.0 * std::f64::consts::LN_2).abs() < 1e-12);

        // hand-built biased case matches a direct scalar evaluation
        let task2 = logit_only_task_model(vec![0.3, -0.2]);
        let mut tape2 = Tape::new();
        let bound2 = task2.bind(&mut tape2, false);
        let x2 = tape2.constant(x_val.clone());
        let cf2 = tape2.constant(g.a.clone());
        let loss2 = loss_l1_phenomenon(&mut tape2, &bound2, x2, &[cf2], 0).unwrap();
        let expect = (0.3f64.exp() + (-0.2f64).exp()).ln() - 0.3;
        assert!((tape2.value(loss2).data[0] - expect).abs() < 1e-12);

        // saturated logits at the right class vanish
        let task3 = logit_only_task_model(vec![100.0, 0.0]);
        let mut tape3 = Tape::new();
        let bound3 = task3.bind(&mut tape3, false);
        let x3 = tape3.constant(x_val);
        let cf3 = tape3.constant(g.a.clone());
        let loss3 = loss_l1_phenomenon(&mut tape3, &bound3, x3, &[cf3], 0).unwrap();
        assert!(tape3.value(loss3).data[0] < 1e-12);
    }

    #[test]
    fn loss_kld_oracles() {
        // mu=1, log_var=0 on a single node and dim: one channel gives 1/2
        let mut tape = Tape::new();
        let gc = LatentPair {
            mu: tape.constant(Mat::from_vec(1, 1, vec![1.0]).unwrap()),
            log_var: tape.constant(Mat::zeros(1, 1)),
        };
        let gs = LatentPair {
            mu: tape.constant(Mat::zeros(1, 1)),
            log_var: tape.constant(Mat::zeros(1, 1)),
        };
        let kld = loss_kld(&mut tape, &gc, &gs).unwrap();
        assert!((tape.value(kld).data[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn loss_kld_is_nonnegative_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let mut tape = Tape::new();
            let draw = |rng: &mut ChaCha8Rng| {
                let mut m = Mat::zeros(4, 3);
                for v in m.data.iter_mut() {
                    *v = rng.gen_range(-3.0..3.0);
                }
                m
            };
            let gc = LatentPair {
                mu: tape.constant(draw(&mut rng)),
                log_var: tape.constant(draw(&mut rng)),
            };
            let gs = LatentPair {
                mu: tape.constant(draw(&mut rng)),
                log_var: tape.constant(draw(&mut rng)),
            };
            let kld = loss_kld(&mut tape, &gc, &gs).unwrap();
            assert!(tape.value(kld).data[0] >= 0.0);
        }
    }

    #[test]
    fn loss_reconstruction_oracles() {
        let mut a = Mat::zeros(2, 2);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);

        // exact reconstruction: only the clamp floor remains
        let mut tape = Tape::new();
        let exact = tape.constant(a.clone());
        let loss = loss_reconstruction(&mut tape, exact, &a).unwrap();
        assert!(tape.value(loss).data[0] < 1e-10);

        // all-0.5 prediction: closed form ln2·(2 - 2|E|·2/n²)... evaluated
        // directly: w=2, two positive and two negative entries over n²=4
        let mut tape2 = Tape::new();
        let half = tape2.constant(Mat::filled(2, 2, 0.5));
        let loss2 = loss_reconstruction(&mut tape2, half, &a).unwrap();
        assert!((tape2.value(loss2).data[0] - 1.5 * std::f64::consts::LN_2).abs() < 1e-12);

        // edgeless graph has no defined positive weight
        let mut tape3 = Tape::new();
        let p = tape3.constant(Mat::zeros(2, 2));
        assert!(loss_reconstruction(&mut tape3, p, &Mat::zeros(2, 2)).is_err());
    }

    #[test]
    fn vgae_only_training_descends() {
        // noise-free autoencoding of one fixed graph: z = mu on both channels,
        // loss = reconstruction of the unmasked union decode
        let g = Graph::from_edges(
            Mat::from_rows(&[
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 1.0],
                vec![0.5, 0.2],
                vec![0.9, 0.1],
                vec![0.3, 0.7],
            ])
            .unwrap(),
            &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5)],
            0,
        )
        .unwrap();
        let ahat_val = normalize_adjacency(&g.a).unwrap();
        let mut params = CiderParams::init(2, 4, 3, 15).unwrap();
        let mut opt = AdamState::new(AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        });
        let mut losses = Vec::new();
        for _ in 0..500 {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape, true);
            let x = tape.constant(g.x.clone());
            let ahat = tape.constant(ahat_val.clone());
            let h = encode_shared(&mut tape, &bound, x, ahat).unwrap();
            let gc = infer_causal(&mut tape, &bound, h, ahat).unwrap();
            let gs = infer_spurious(&mut tape, &bound, h, gc.mu, ahat).unwrap();
            let pc = decode_inner_product(&mut tape, gc.mu).unwrap();
            let ps = decode_inner_product(&mut tape, gs.mu).unwrap();
            let pu = union_probs_on_tape(&mut tape, pc, ps).unwrap();
            let recon = loss_reconstruction(&mut tape, pu, &g.a).unwrap();
            // zero-weighted KLD keeps the unused log-variance heads on the
            // tape path so every leaf reports a gradient
            let kld = loss_kld(&mut tape, &gc, &gs).unwrap();
            let kld0 = tape.scalar_mul(kld, 0.0).unwrap();
            let loss = tape.add(recon, kld0).unwrap();
            losses.push(tape.value(loss).data[0]);
            tape.backward(loss).unwrap();
            let grads: Vec<Mat> = bound
                .parameter_tensors()
                .iter()
                .map(|&t| tape.leaf_grad(t).unwrap().clone())
                .collect();
            let mut ps_mut = params.parameters_mut();
            let mut pairs: Vec<(&mut Mat, &Mat)> = ps_mut
                .iter_mut()
                .zip(grads.iter())
                .map(|(p, g)| (&mut **p, g))
                .collect();
            opt.step(&mut pairs).unwrap();
        }
        let drops = losses.windows(2).filter(|w| w[1] <= w[0]).count();
        let frac = drops as f64 / (losses.len() - 1) as f64;
        assert!(frac >= 0.95, "loss decreased in only {frac} of steps");
        assert!(losses.last().unwrap() < &losses[0]);
    }

    #[test]
    fn loss_task_oracles() {
        let g = triangle();
        let x_val = Mat::filled(3, 2, 1.0);

        // uniform probabilities on two classes: mse = 0.25
        let task = logit_only_task_model(vec![0.0, 0.0]);
        let mut tape = Tape::new();
        let bound = task.bind(&mut tape, false);
        let x = tape.constant(x_val.clone());
        let pc = tape.constant(g.a.clone());
        let loss = loss_task(&mut tape, &bound, pc, x, 1, 2).unwrap();
        assert!((tape.value(loss).data[0] - 0.25).abs() < 1e-15);

        // saturated correct prediction: zero
        let task2 = logit_only_task_model(vec![100.0, 0.0]);
        let mut tape2 = Tape::new();
        let bound2 = task2.bind(&mut tape2, false);
        let x2 = tape2.constant(x_val);
        let pc2 = tape2.constant(g.a.clone());
        let loss2 = loss_task(&mut tape2, &bound2, pc2, x2, 0, 2).unwrap();
        assert!(tape2.value(loss2).data[0] < 1e-12);
    }

    #[test]
    fn total_loss_arithmetic_and_nan_detection() {
        let mut tape = Tape::new();
        let parts: Vec<Tensor> = [1.0, 2.0, 3.0, 4.0]
            .iter()
            .map(|&v| tape.constant(Mat::from_vec(1, 1, vec![v]).unwrap()))
            .collect();
        let (total, bd) =
            total_loss(&mut tape, parts[0], parts[1], parts[2], parts[3], 1.0).unwrap();
        assert_eq!(tape.value(total).data[0], 10.0);
        assert_eq!(bd.total, 10.0);
        assert_eq!(bd.task, 4.0);

        let (reduced, bd0) =
            total_loss(&mut tape, parts[0], parts[1], parts[2], parts[3], 0.0).unwrap();
        assert_eq!(tape.value(reduced).data[0], 6.0);
        assert_eq!(bd0.total, 6.0);

        let zeros: Vec<Tensor> = (0..4).map(|_| tape.constant(Mat::zeros(1, 1))).collect();
        let (zt, _) = total_loss(&mut tape, zeros[0], zeros[1], zeros[2], zeros[3], 1.0).unwrap();
        assert_eq!(tape.value(zt).data[0], 0.0);
    }

    #[test]
    fn full_single_step_loss_passes_grad_check() {
        let g = Graph::from_edges(
            Mat::from_rows(&[
                vec![1.0, 0.2],
                vec![0.3, 0.8],
                vec![0.6, 0.4],
                vec![0.9, 0.1],
                vec![0.2, 0.5],
                vec![0.7, 0.7],
            ])
            .unwrap(),
            &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (1, 4)],
            0,
        )
        .unwrap();
        let task = TaskModel::init(2, 4, 2, 2, 31).unwrap();
        let params = CiderParams::init(2, 3, 2, 32).unwrap();
        let weights: Vec<Mat> = vec![
            params.shared.w.clone(),
            params.shared.b.clone(),
            params.causal_mu.w.clone(),
            params.causal_mu.b.clone(),
            params.causal_lv.w.clone(),
            params.causal_lv.b.clone(),
            params.spurious_mu.w.clone(),
            params.spurious_mu.b.clone(),
            params.spurious_lv.w.clone(),
            params.spurious_lv.b.clone(),
        ];

        let report = grad_check(
            |tape, p| {
                let bound = BoundCiderParams {
                    shared: (p[0], p[1], Activation::Relu),
                    causal_mu: (p[2], p[3]),
                    causal_lv: (p[4], p[5]),
                    spurious_mu: (p[6], p[7]),
                    spurious_lv: (p[8], p[9]),
                };
                let task_bound = task.bind(tape, false);
                // fixed seed inside the closure keeps the noise identical
                // across finite-difference evaluations
                let mut rng = ChaCha8Rng::seed_from_u64(99);
                let x = tape.constant(g.x.clone());
                let a_t = tape.constant(g.a.clone());
                let ahat = normalize_adjacency_on_tape(tape, a_t)?;
                let h = encode_shared(tape, &bound, x, ahat)?;
                let gc = infer_causal(tape, &bound, h, ahat)?;
                let z_c = reparam_sample(tape, &gc, &mut rng)?;
                let pc = decode_inner_product(tape, z_c)?;
                let pc_masked = tape.mask(pc, &g.a)?;
                let gs = infer_spurious(tape, &bound, h, z_c, ahat)?;
                let mut cfs = Vec::new();
                let mut ps_first = None;
                for _ in 0..2 {
                    let z_s = reparam_sample(tape, &gs, &mut rng)?;
                    let ps = decode_inner_product(tape, z_s)?;
                    if ps_first.is_none() {
                        ps_first = Some(ps);
                    }
                    cfs.push(make_counterfactual(tape, pc, ps, &g.a)?);
                }
                let l1 = loss_l1_model(tape, &task_bound, x, a_t, &cfs)?;
                let kld = loss_kld(tape, &gc, &gs)?;
                let pu = union_probs_on_tape(tape, pc, ps_first.unwrap())?;
                let recon = loss_reconstruction(tape, pu, &g.a)?;
                let lt = loss_task(tape, &task_bound, pc_masked, x, g.y, 2)?;
                let (total, _) = total_loss(tape, l1, kld, recon, lt, 1.0)?;
                Ok(total)
            },
            &weights,
            1e-3,
        )
        .unwrap();
        assert!(
            report.passes(1e-3),
            "max rel err {} at {:?}",
            report.max_rel_err,
            report.worst
        );
    }

    #[test]
    fn one_hot_basics() {
        let m = one_hot(1, 3).unwrap();
        assert_eq!(m.data, vec![0.0, 1.0, 0.0]);
        assert!(one_hot(3, 3).is_err());
    }
}
