//! `cider evaluate`: score explanations at several sparsity levels and write
//! the report CSV. Explanation of test graphs fans out across threads; every
//! graph owns a seed-derived RNG stream, so the report is thread-count
//! independent.

use super::explain::{check_task_matches, parse_objective, parse_update_mode};
use super::{ensure_dir, load_config_file, require_path, resolve, write_json_file};
use cider_core::autodiff::Mat;
use cider_core::checkpoint::{load_cider_checkpoint, load_task_checkpoint};
use cider_core::data::json::load_dataset;
use cider_core::diffusion::{causal_strength, explain_graph, DiffusionConfig, ExplanationResult};
use cider_core::gnn::evaluate_accuracy;
use cider_core::graph::upper_triangle_edges;
use cider_core::{CiderError, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::PathBuf;

#[derive(clap::Args, Debug)]
pub struct EvaluateArgs {
    /// JSON config file; explicit flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory (manifest.json + graphs/).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Trained task-model checkpoint.
    #[arg(long)]
    pub task_checkpoint: Option<PathBuf>,
    /// Trained explainer checkpoint.
    #[arg(long)]
    pub cider_checkpoint: Option<PathBuf>,
    /// Output directory for report.csv and the config echo.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated retained-edge fractions, each in (0, 1].
    #[arg(long, value_delimiter = ',')]
    pub sparsities: Option<Vec<f64>>,
    /// Also report motif precision/recall against ground-truth masks.
    #[arg(long)]
    pub gt_recovery: bool,
    /// Spurious resamples per graph for the model-free strength probe.
    #[arg(long)]
    pub strength_draws: Option<usize>,
    /// Distillation chain length T used to score edges.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Causal decodes averaged per step.
    #[arg(long)]
    pub nc: Option<usize>,
    /// Spurious draws per step.
    #[arg(long)]
    pub ns: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct FileConfig {
    dataset: Option<PathBuf>,
    task_checkpoint: Option<PathBuf>,
    cider_checkpoint: Option<PathBuf>,
    out: Option<PathBuf>,
    sparsities: Option<Vec<f64>>,
    gt_recovery: Option<bool>,
    strength_draws: Option<usize>,
    steps: Option<usize>,
    nc: Option<usize>,
    ns: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Serialize)]
struct ResolvedConfig {
    dataset: PathBuf,
    task_checkpoint: PathBuf,
    cider_checkpoint: PathBuf,
    out: PathBuf,
    sparsities: Vec<f64>,
    gt_recovery: bool,
    strength_draws: usize,
    steps: usize,
    nc: usize,
    ns: usize,
    seed: u64,
}

const REPORT_FOOTER: &str = "\
# reference accuracy at sparsity 0.1/0.2/0.3/0.4\n\
# MUTAG: 0.640,0.640,0.672,0.674\n\
# NCI1: 0.676,0.680,0.692,0.688\n";

/// Explains each listed graph in parallel. Results come back keyed by graph
/// index; per-graph RNG streams make the outcome independent of scheduling.
pub(crate) fn explain_all(
    params: &cider_core::model::CiderParams,
    task: &cider_core::gnn::TaskModel,
    ds: &cider_core::graph::Dataset,
    dcfg: &DiffusionConfig,
    indices: &[usize],
) -> Result<HashMap<usize, ExplanationResult>> {
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(indices.len().max(1));
    let chunk_len = indices.len().div_ceil(workers);
    let outputs: Vec<Result<(usize, ExplanationResult)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = indices
            .chunks(chunk_len.max(1))
            .map(|chunk| {
                scope.spawn(move || {
                    chunk
                        .iter()
                        .map(|&i| {
                            let mut rng = ChaCha8Rng::seed_from_u64(dcfg.seed ^ i as u64);
                            explain_graph(params, task, &ds.graphs[i], dcfg, &mut rng)
                                .map(|(result, _)| (i, result))
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("explanation worker panicked"))
            .collect()
    });
    let mut map = HashMap::new();
    for out in outputs {
        let (i, result) = out?;
        map.insert(i, result);
    }
    Ok(map)
}

fn gt_overlap(sub: &Mat, gt: &Mat) -> (usize, usize, usize) {
    let sub_edges = upper_triangle_edges(sub);
    let gt_edges = upper_triangle_edges(gt);
    let hit = sub_edges
        .iter()
        .filter(|&&(u, v)| gt.at(u, v) != 0.0)
        .count();
    (hit, sub_edges.len(), gt_edges.len())
}

pub fn run(args: EvaluateArgs) -> Result<()> {
    let file: FileConfig = load_config_file(args.config.as_deref())?;
    let defaults = DiffusionConfig::default();
    let cfg = ResolvedConfig {
        dataset: require_path(args.dataset, file.dataset, "dataset")?,
        task_checkpoint: require_path(args.task_checkpoint, file.task_checkpoint, "task-checkpoint")?,
        cider_checkpoint: require_path(
            args.cider_checkpoint,
            file.cider_checkpoint,
            "cider-checkpoint",
        )?,
        out: require_path(args.out, file.out, "out")?,
        sparsities: resolve(
            args.sparsities.filter(|s| !s.is_empty()),
            file.sparsities,
            vec![0.1, 0.2, 0.3, 0.4],
        ),
        gt_recovery: args.gt_recovery || file.gt_recovery.unwrap_or(false),
        strength_draws: resolve(args.strength_draws, file.strength_draws, 8),
        steps: resolve(args.steps, file.steps, defaults.steps),
        nc: resolve(args.nc, file.nc, defaults.n_causal),
        ns: resolve(args.ns, file.ns, defaults.n_spurious),
        seed: resolve(args.seed, file.seed, 0),
    };
    for &s in &cfg.sparsities {
        if !(s > 0.0 && s <= 1.0) {
            return Err(CiderError::contract(format!(
                "sparsity must lie in (0, 1], got {s}"
            )));
        }
    }

    let ds = load_dataset(&cfg.dataset)?;
    let task = load_task_checkpoint(&cfg.task_checkpoint)?;
    check_task_matches(&task, &ds)?;
    let params = load_cider_checkpoint(&cfg.cider_checkpoint)?;
    if params.feature_dim() != ds.feature_dim() {
        return Err(CiderError::contract(format!(
            "checkpoint/architecture mismatch: explainer expects {} features, dataset has {}",
            params.feature_dim(),
            ds.feature_dim()
        )));
    }
    if ds.split.test.is_empty() {
        return Err(CiderError::contract("evaluation needs a test split"));
    }
    if params.trained_steps == 0 {
        eprintln!("warning: the explainer checkpoint has never been trained");
    }

    let dcfg = DiffusionConfig {
        steps: cfg.steps,
        n_causal: cfg.nc,
        n_spurious: cfg.ns,
        objective: parse_objective("model")?,
        epochs: 0,
        update_mode: parse_update_mode("per-step")?,
        seed: cfg.seed,
        ..DiffusionConfig::default()
    };
    let indices = ds.split.test.clone();
    let results = explain_all(&params, &task, &ds, &dcfg, &indices)?;

    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["sparsity", "accuracy", "effect", "agreement"];
    if cfg.gt_recovery {
        header.extend(["precision", "recall"]);
    }
    wtr.write_record(&header)
        .map_err(|e| CiderError::contract(format!("report write failed: {e}")))?;

    for (si, &rho) in cfg.sparsities.iter().enumerate() {
        let mut subgraphs = HashMap::new();
        for &i in &indices {
            subgraphs.insert(i, results[&i].subgraph_at(rho)?);
        }
        let accuracy = evaluate_accuracy(&task, &ds, |i, _| Ok(subgraphs[&i].clone()))?;

        let mut effect_sum = 0.0;
        let mut agreement_sum = 0.0;
        let mut recall_sum = 0.0;
        let mut precision_sum = 0.0;
        let mut gt_graphs = 0usize;
        for &i in &indices {
            let g = &ds.graphs[i];
            let sub = &subgraphs[&i];
            let mut rng = ChaCha8Rng::seed_from_u64(
                cfg.seed ^ 0x5742_0000_0000 ^ ((si as u64) << 32) ^ i as u64,
            );
            let (eff, agr) = causal_strength(&task, g, sub, cfg.strength_draws, &mut rng)?;
            effect_sum += eff;
            agreement_sum += agr;
            if cfg.gt_recovery {
                if let Some(gt) = &g.gt_mask {
                    let (hit, sub_ct, gt_ct) = gt_overlap(sub, gt);
                    if sub_ct > 0 {
                        precision_sum += hit as f64 / sub_ct as f64;
                    }
                    if gt_ct > 0 {
                        recall_sum += hit as f64 / gt_ct as f64;
                    }
                    gt_graphs += 1;
                }
            }
        }
        let n = indices.len() as f64;
        let mut row = vec![
            rho.to_string(),
            accuracy.to_string(),
            (effect_sum / n).to_string(),
            (agreement_sum / n).to_string(),
        ];
        if cfg.gt_recovery {
            if gt_graphs == 0 {
                return Err(CiderError::contract(
                    "--gt-recovery requires ground-truth masks, none found in the test split",
                ));
            }
            row.push((precision_sum / gt_graphs as f64).to_string());
            row.push((recall_sum / gt_graphs as f64).to_string());
        }
        wtr.write_record(&row)
            .map_err(|e| CiderError::contract(format!("report write failed: {e}")))?;
    }

    let mut bytes = wtr
        .into_inner()
        .map_err(|e| CiderError::contract(format!("report write failed: {e}")))?;
    bytes.extend_from_slice(REPORT_FOOTER.as_bytes());

    ensure_dir(&cfg.out)?;
    let report_path = cfg.out.join("report.csv");
    std::fs::write(&report_path, &bytes).map_err(|e| CiderError::io(&report_path, e))?;
    write_json_file(&cfg.out.join("config.json"), &cfg)?;
    println!(
        "evaluated {} test graphs at {} sparsity levels -> {}",
        indices.len(),
        cfg.sparsities.len(),
        report_path.display()
    );
    Ok(())
}
