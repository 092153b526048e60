//! Counterfactual distillation: repeated encode/decode passes multiply the
//! causal edge distribution into a shrinking chain P_T = A, P_{t-1} = P_t ∘ Pc,
//! training the explainer along the way and scoring edges by P_0.

use crate::autodiff::{AdamState, Mat, Tape};
use crate::error::{CiderError, Result};
use crate::gnn::{argmax_row, task_forward, TaskModel};
use crate::graph::{
    mask_to_support, normalize_adjacency_on_tape, union_probs, upper_triangle_edges,
    EdgeProbMatrix, Graph,
};
use crate::model::{
    decode_inner_product, encode_shared, infer_causal, infer_spurious, loss_kld, loss_l1_model,
    loss_l1_phenomenon, loss_reconstruction, loss_task, make_counterfactual, reparam_sample,
    total_loss, union_probs_on_tape, weighted_bce_plain, CiderParams, LossBreakdown,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

/// Which counterfactual-consistency loss drives the first term of the
/// objective: the gap in the task model's pooled representation, or the
/// cross-entropy of its prediction against the observed label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    Model,
    Phenomenon,
}

/// Optimizer cadence: one update per distillation step, or gradients summed
/// over a graph's whole chain with a single update at its end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateMode {
    PerStep,
    PerChain,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffusionConfig {
    /// Chain length T.
    pub steps: usize,
    /// Causal decodes averaged into Pc per step.
    pub n_causal: usize,
    /// Spurious draws (and counterfactuals) per step.
    pub n_spurious: usize,
    pub objective: Objective,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: crate::autodiff::AdamConfig,
    pub lambda_task: f64,
    pub update_mode: UpdateMode,
    pub seed: u64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig {
            steps: 10,
            n_causal: 1,
            n_spurious: 4,
            objective: Objective::Model,
            epochs: 500,
            batch_size: 128,
            adam: crate::autodiff::AdamConfig::default(),
            lambda_task: 1.0,
            update_mode: UpdateMode::PerStep,
            seed: 0,
        }
    }
}

/// Everything one distillation step produces. `pc` and `ps` are the causal
/// and spurious edge distributions masked to the observed support;
/// `spurious_mu`/`spurious_lv` expose the step's spurious posterior so fresh
/// counterfactuals can be drawn after the chain ends.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub pc: EdgeProbMatrix,
    pub ps: EdgeProbMatrix,
    pub losses: LossBreakdown,
    pub audit_recon: f64,
    pub spurious_mu: Mat,
    pub spurious_lv: Mat,
    pub grads: Option<Vec<Mat>>,
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: usize,
    pub pc: EdgeProbMatrix,
    pub ps: EdgeProbMatrix,
    pub losses: LossBreakdown,
    pub audit_recon: f64,
}

#[derive(Debug, Clone, Default)]
pub struct DiffusionTrace {
    pub steps: Vec<StepRecord>,
}

/// Final edge scores plus the counterfactual quality of the explanation.
#[derive(Debug, Clone)]
pub struct ExplanationResult {
    pub scores: EdgeProbMatrix,
    pub causal_effect: f64,
    pub label_agreement: f64,
    pub untrained_params: bool,
    support: Mat,
}

impl ExplanationResult {
    /// 0/1 mask of the top ⌈sparsity·|E|⌉ edges by score.
    pub fn subgraph_at(&self, sparsity: f64) -> Result<Mat> {
        if !(sparsity > 0.0 && sparsity <= 1.0) {
            return Err(CiderError::contract(format!(
                "sparsity must lie in (0, 1], got {sparsity}"
            )));
        }
        let m = upper_triangle_edges(&self.support).len();
        let k = (sparsity * m as f64).ceil() as usize;
        crate::graph::top_k_edges(self.scores.mat(), &self.support, k)
    }

    pub fn support(&self) -> &Mat {
        &self.support
    }
}

#[derive(Debug, Clone, Default)]
pub struct CiderTrainLog {
    pub epoch_losses: Vec<LossBreakdown>,
}

/// P_{t-1} = P_t ∘ Pc. Entrywise products of values in [0, 1] never grow, so
/// chains are monotone under every rounding mode.
pub fn chain_update(p_t: &EdgeProbMatrix, pc: &EdgeProbMatrix) -> Result<EdgeProbMatrix> {
    let mat = p_t.mat().zip(pc.mat(), |a, b| a * b)?;
    EdgeProbMatrix::new(mat)
}

fn check_support(p_t: &EdgeProbMatrix, graph: &Graph) -> Result<()> {
    if p_t.n() != graph.n {
        return Err(CiderError::contract(format!(
            "chain state covers {} nodes but the graph has {}",
            p_t.n(),
            graph.n
        )));
    }
    for i in 0..graph.n {
        for j in 0..graph.n {
            if p_t.at(i, j) > 0.0 && graph.a.at(i, j) == 0.0 {
                return Err(CiderError::contract(format!(
                    "chain state puts mass on ({i}, {j}) outside the observed support"
                )));
            }
        }
    }
    Ok(())
}

/// One distillation step on the chain state `p_t`: encode the current
/// distribution, decode both channels, assemble counterfactuals, and score
/// the four loss terms. With `collect_grads` the explainer weights are bound
/// as leaves and their gradients returned; otherwise no backward pass runs.
pub fn distill_step(
    params: &CiderParams,
    task: &TaskModel,
    graph: &Graph,
    p_t: &EdgeProbMatrix,
    cfg: &DiffusionConfig,
    rng: &mut ChaCha8Rng,
    collect_grads: bool,
) -> Result<StepOutput> {
    check_support(p_t, graph)?;
    if cfg.n_causal == 0 || cfg.n_spurious == 0 {
        return Err(CiderError::contract(
            "each distillation step needs at least one draw per channel",
        ));
    }

    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, collect_grads);
    let task_bound = task.bind(&mut tape, false);
    let x = tape.constant(graph.x.clone());
    let a_t = tape.constant(graph.a.clone());
    let p_in = tape.constant(p_t.mat().clone());
    let ahat = normalize_adjacency_on_tape(&mut tape, p_in)?;

    let h = encode_shared(&mut tape, &bound, x, ahat)?;
    let gc = infer_causal(&mut tape, &bound, h, ahat)?;

    let mut z_first = None;
    let mut pc_acc = None;
    for _ in 0..cfg.n_causal {
        let z = reparam_sample(&mut tape, &gc, rng)?;
        if z_first.is_none() {
            z_first = Some(z);
        }
        let d = decode_inner_product(&mut tape, z)?;
        pc_acc = Some(match pc_acc {
            Some(prev) => tape.add(prev, d)?,
            None => d,
        });
    }
    let pc_mean = tape.scalar_mul(pc_acc.unwrap(), 1.0 / cfg.n_causal as f64)?;
    let pc_masked = tape.mask(pc_mean, &graph.a)?;

    let gs = infer_spurious(&mut tape, &bound, h, z_first.unwrap(), ahat)?;
    let mut ps_first = None;
    let mut ps_acc = None;
    let mut cfs = Vec::with_capacity(cfg.n_spurious);
    for _ in 0..cfg.n_spurious {
        let z_s = reparam_sample(&mut tape, &gs, rng)?;
        let ps = decode_inner_product(&mut tape, z_s)?;
        if ps_first.is_none() {
            ps_first = Some(ps);
        }
        ps_acc = Some(match ps_acc {
            Some(prev) => tape.add(prev, ps)?,
            None => ps,
        });
        cfs.push(make_counterfactual(&mut tape, pc_masked, ps, &graph.a)?);
    }
    let ps_mean = tape.scalar_mul(ps_acc.unwrap(), 1.0 / cfg.n_spurious as f64)?;
    let ps_masked = tape.mask(ps_mean, &graph.a)?;

    let l1 = match cfg.objective {
        Objective::Model => loss_l1_model(&mut tape, &task_bound, x, a_t, &cfs)?,
        Objective::Phenomenon => loss_l1_phenomenon(&mut tape, &task_bound, x, &cfs, graph.y)?,
    };
    let kld = loss_kld(&mut tape, &gc, &gs)?;
    // reconstruction reads the unmasked union of the mean causal decode and
    // the first spurious decode of the step
    let pu = union_probs_on_tape(&mut tape, pc_mean, ps_first.unwrap())?;
    let recon = loss_reconstruction(&mut tape, pu, &graph.a)?;
    let ltask = loss_task(
        &mut tape,
        &task_bound,
        pc_masked,
        x,
        graph.y,
        task.class_count,
    )?;
    let (total, losses) = total_loss(&mut tape, l1, kld, recon, ltask, cfg.lambda_task)?;

    let grads = if collect_grads {
        tape.backward(total)?;
        let mut gs_out = Vec::new();
        for t in bound.parameter_tensors() {
            gs_out.push(tape.leaf_grad(t)?.clone());
        }
        Some(gs_out)
    } else {
        None
    };

    let pc_out = EdgeProbMatrix::new(tape.value(pc_masked).clone())?;
    let ps_out = EdgeProbMatrix::new(tape.value(ps_masked).clone())?;

    // factorization audit: the two masked channels must still reconstruct the
    // step's input support when recombined
    let causal_part = chain_update(p_t, &pc_out)?;
    let spurious_part = chain_update(p_t, &ps_out)?;
    let recombined = union_probs(&causal_part, &spurious_part)?;
    let support = p_t.mat().map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let support_entries = support.sum();
    let pos_weight = if support_entries > 0.0 {
        (graph.n * graph.n) as f64 / support_entries
    } else {
        1.0
    };
    let audit_recon = weighted_bce_plain(recombined.mat(), &support, pos_weight)?;

    Ok(StepOutput {
        pc: pc_out,
        ps: ps_out,
        losses,
        audit_recon,
        spurious_mu: tape.value(gs.mu).clone(),
        spurious_lv: tape.value(gs.log_var).clone(),
        grads,
    })
}

/// A distillation step followed by one optimizer update of the explainer.
pub fn distill_step_learn(
    params: &mut CiderParams,
    opt: &mut AdamState,
    task: &TaskModel,
    graph: &Graph,
    p_t: &EdgeProbMatrix,
    cfg: &DiffusionConfig,
    rng: &mut ChaCha8Rng,
) -> Result<StepOutput> {
    let out = distill_step(params, task, graph, p_t, cfg, rng, true)?;
    apply_grads(params, opt, out.grads.as_ref().unwrap())?;
    Ok(out)
}

fn apply_grads(params: &mut CiderParams, opt: &mut AdamState, grads: &[Mat]) -> Result<()> {
    let mut ps = params.parameters_mut();
    let mut pairs: Vec<(&mut Mat, &Mat)> = ps
        .iter_mut()
        .zip(grads.iter())
        .map(|(p, g)| (&mut **p, g))
        .collect();
    opt.step(&mut pairs)?;
    params.trained_steps += 1;
    Ok(())
}

fn add_context(e: CiderError, ctx: &str) -> CiderError {
    match e {
        CiderError::Numeric { op } => CiderError::Numeric {
            op: format!("{ctx}: {op}"),
        },
        CiderError::Contract(m) => CiderError::contract(format!("{ctx}: {m}")),
        other => other,
    }
}

/// Train the explainer over the dataset's training split. The task model
/// stays frozen throughout. Returns per-epoch mean loss breakdowns.
pub fn train_cider(
    params: &mut CiderParams,
    task: &TaskModel,
    ds: &crate::graph::Dataset,
    cfg: &DiffusionConfig,
) -> Result<CiderTrainLog> {
    if cfg.steps == 0 {
        return Err(CiderError::contract("the chain needs at least one step"));
    }
    if cfg.epochs > 0 && ds.split.train.is_empty() {
        return Err(CiderError::contract("training requires a train split"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x51de_5eed);
    let mut opt = AdamState::new(cfg.adam.clone());
    let mut log = CiderTrainLog::default();

    for epoch in 0..cfg.epochs {
        let mut order = ds.split.train.clone();
        shuffle(&mut order, &mut rng);
        let mut sums = LossBreakdown::default();
        let mut count = 0usize;

        for chunk in order.chunks(cfg.batch_size.max(1)) {
            for &gi in chunk {
                let graph = &ds.graphs[gi];
                let mut p = EdgeProbMatrix::new(graph.a.clone())
                    .map_err(|e| add_context(e, &format!("graph {gi}")))?;
                let mut chain_grads: Option<Vec<Mat>> = None;

                for t in (1..=cfg.steps).rev() {
                    let ctx = format!("epoch {epoch}, step t={t}, graph {gi}");
                    let out = match cfg.update_mode {
                        UpdateMode::PerStep => {
                            distill_step_learn(params, &mut opt, task, graph, &p, cfg, &mut rng)
                                .map_err(|e| add_context(e, &ctx))?
                        }
                        UpdateMode::PerChain => {
                            let out = distill_step(params, task, graph, &p, cfg, &mut rng, true)
                                .map_err(|e| add_context(e, &ctx))?;
                            match chain_grads.as_mut() {
                                Some(acc) => {
                                    for (a, g) in acc.iter_mut().zip(out.grads.as_ref().unwrap()) {
                                        *a = a.zip(g, |x, y| x + y)?;
                                    }
                                }
                                None => chain_grads = out.grads.clone(),
                            }
                            out
                        }
                    };
                    sums.l1 += out.losses.l1;
                    sums.kld += out.losses.kld;
                    sums.recon += out.losses.recon;
                    sums.task += out.losses.task;
                    sums.total += out.losses.total;
                    count += 1;
                    p = chain_update(&p, &out.pc)?;
                }

                if let Some(acc) = chain_grads {
                    apply_grads(params, &mut opt, &acc)?;
                }
            }
        }

        let c = count.max(1) as f64;
        log.epoch_losses.push(LossBreakdown {
            l1: sums.l1 / c,
            kld: sums.kld / c,
            recon: sums.recon / c,
            task: sums.task / c,
            total: sums.total / c,
        });
    }
    Ok(log)
}

fn shuffle(idx: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..idx.len()).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
}

fn plain_sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn plain_decode(z: &Mat) -> Result<Mat> {
    let gram = z.matmul(&z.transpose())?;
    let mut p = gram.map(plain_sigmoid);
    for i in 0..p.rows {
        p.set(i, i, 0.0);
    }
    Ok(p)
}

fn plain_reparam(mu: &Mat, log_var: &Mat, rng: &mut impl Rng) -> Result<Mat> {
    if !mu.same_shape(log_var) {
        return Err(CiderError::dim("reparam", "mu and log_var shapes differ"));
    }
    let mut z = mu.clone();
    for (zv, &lv) in z.data.iter_mut().zip(log_var.data.iter()) {
        let eps: f64 = rng.sample(rand_distr::StandardNormal);
        *zv += (lv / 2.0).exp() * eps;
    }
    Ok(z)
}

/// Run the full chain on one graph with frozen weights. Scores are P_0; the
/// counterfactual quality numbers come from fresh spurious draws at the last
/// step's posterior combined with the final scores.
pub fn explain_graph(
    params: &CiderParams,
    task: &TaskModel,
    graph: &Graph,
    cfg: &DiffusionConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(ExplanationResult, DiffusionTrace)> {
    if cfg.steps == 0 {
        return Err(CiderError::contract("the chain needs at least one step"));
    }
    let mut p = EdgeProbMatrix::new(graph.a.clone())?;
    let mut trace = DiffusionTrace::default();
    let mut last_posterior: Option<(Mat, Mat)> = None;

    for t in (1..=cfg.steps).rev() {
        let out = distill_step(params, task, graph, &p, cfg, rng, false)
            .map_err(|e| add_context(e, &format!("step t={t}")))?;
        p = chain_update(&p, &out.pc)?;
        last_posterior = Some((out.spurious_mu.clone(), out.spurious_lv.clone()));
        trace.steps.push(StepRecord {
            t,
            pc: out.pc,
            ps: out.ps,
            losses: out.losses,
            audit_recon: out.audit_recon,
        });
    }

    let scores = p;
    let (mu_s, lv_s) = last_posterior.unwrap();
    let (rep_full, logits_full) = task_forward(task, &graph.x, &graph.a)?;
    let pred_full = argmax_row(&logits_full);

    let draws = cfg.n_spurious.max(1);
    let mut effect_sum = 0.0;
    let mut agree = 0usize;
    for _ in 0..draws {
        let z_s = plain_reparam(&mu_s, &lv_s, rng)?;
        let ps = EdgeProbMatrix::new(plain_decode(&z_s)?)?;
        let cf = mask_to_support(&union_probs(&scores, &ps)?, &graph.a)?;
        let (rep_cf, logits_cf) = task_forward(task, &graph.x, cf.mat())?;
        let gap: f64 = rep_cf
            .data
            .iter()
            .zip(rep_full.data.iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        effect_sum += gap;
        if argmax_row(&logits_cf) == pred_full {
            agree += 1;
        }
    }

    let result = ExplanationResult {
        scores,
        causal_effect: effect_sum / draws as f64,
        label_agreement: agree as f64 / draws as f64,
        untrained_params: params.trained_steps == 0,
        support: graph.a.clone(),
    };
    Ok((result, trace))
}

/// Model-free interventional probe: keep the candidate subgraph fixed,
/// resample every other observed edge with probability 1/2, and measure how
/// far the task model's pooled representation and prediction move.
pub fn causal_strength(
    task: &TaskModel,
    graph: &Graph,
    subgraph: &Mat,
    draws: usize,
    rng: &mut impl Rng,
) -> Result<(f64, f64)> {
    if !subgraph.same_shape(&graph.a) {
        return Err(CiderError::contract(
            "subgraph mask shape differs from the adjacency",
        ));
    }
    for i in 0..graph.n {
        for j in 0..graph.n {
            let s = subgraph.at(i, j);
            if s != 0.0 && s != 1.0 {
                return Err(CiderError::contract(format!(
                    "subgraph mask entry ({i}, {j}) is {s}, expected 0 or 1"
                )));
            }
            if s == 1.0 && graph.a.at(i, j) == 0.0 {
                return Err(CiderError::contract(format!(
                    "subgraph keeps edge ({i}, {j}) outside the observed support"
                )));
            }
            if subgraph.at(i, j) != subgraph.at(j, i) {
                return Err(CiderError::contract("subgraph mask is not symmetric"));
            }
        }
    }

    let complement: Vec<(usize, usize)> = upper_triangle_edges(&graph.a)
        .into_iter()
        .filter(|&(u, v)| subgraph.at(u, v) == 0.0)
        .collect();
    if complement.is_empty() {
        return Ok((0.0, 1.0));
    }
    if draws == 0 {
        return Err(CiderError::contract(
            "a strict subgraph needs at least one resampling draw",
        ));
    }

    let (rep_full, logits_full) = task_forward(task, &graph.x, &graph.a)?;
    let pred_full = argmax_row(&logits_full);
    let mut effect_sum = 0.0;
    let mut agree = 0usize;
    for _ in 0..draws {
        let mut cf = subgraph.clone();
        for &(u, v) in &complement {
            if rng.gen::<f64>() < 0.5 {
                cf.set(u, v, 1.0);
                cf.set(v, u, 1.0);
            }
        }
        let (rep_cf, logits_cf) = task_forward(task, &graph.x, &cf)?;
        let gap: f64 = rep_cf
            .data
            .iter()
            .zip(rep_full.data.iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        effect_sum += gap;
        if argmax_row(&logits_cf) == pred_full {
            agree += 1;
        }
    }
    Ok((effect_sum / draws as f64, agree as f64 / draws as f64))
}

fn mat_rows_json(m: &Mat) -> serde_json::Value {
    let rows: Vec<Vec<f64>> = (0..m.rows)
        .map(|i| (0..m.cols).map(|j| m.at(i, j)).collect())
        .collect();
    json!(rows)
}

/// Per-graph trace export: step records plus the final scores and
/// counterfactual quality numbers.
pub fn export_trace_json(trace: &DiffusionTrace, result: &ExplanationResult) -> serde_json::Value {
    json!({
        "steps": trace.steps.iter().map(|s| json!({
            "t": s.t,
            "pc": mat_rows_json(s.pc.mat()),
            "ps": mat_rows_json(s.ps.mat()),
            "losses": serde_json::to_value(s.losses).unwrap_or_default(),
            "audit_recon": s.audit_recon,
        })).collect::<Vec<_>>(),
        "scores": mat_rows_json(result.scores.mat()),
        "effect": result.causal_effect,
        "agreement": result.label_agreement,
        "untrained_params": result.untrained_params,
    })
}
