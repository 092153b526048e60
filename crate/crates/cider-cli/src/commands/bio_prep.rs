//! `cider bio-prep`: turn an expression matrix into a co-expression graph
//! dataset. Cleaning drops empty rows/columns, optional annotation collapses
//! cells into cell-type means, and absolute Pearson correlation above the
//! threshold becomes an edge.

use super::{ensure_dir, load_config_file, require_path, resolve, write_json_file};
use cider_core::data::json::save_dataset;
use cider_core::data::tabular::{
    aggregate_by_celltype, clean_matrix, correlation_network, read_annotation_csv,
    read_expression_csv,
};
use cider_core::graph::{Dataset, Split};
use cider_core::Result;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(clap::Args, Debug)]
pub struct BioPrepArgs {
    /// JSON config file; explicit flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Expression CSV: rows are genes, columns are cells.
    #[arg(long)]
    pub expression: Option<PathBuf>,
    /// Optional cell -> cell-type annotation CSV.
    #[arg(long)]
    pub annotation: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Minimum |Pearson correlation| for an edge.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct FileConfig {
    expression: Option<PathBuf>,
    annotation: Option<PathBuf>,
    out: Option<PathBuf>,
    threshold: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ResolvedConfig {
    expression: PathBuf,
    annotation: Option<PathBuf>,
    out: PathBuf,
    threshold: f64,
}

pub fn run(args: BioPrepArgs) -> Result<()> {
    let file: FileConfig = load_config_file(args.config.as_deref())?;
    let cfg = ResolvedConfig {
        expression: require_path(args.expression, file.expression, "expression")?,
        annotation: args.annotation.or(file.annotation),
        out: require_path(args.out, file.out, "out")?,
        threshold: resolve(args.threshold, file.threshold, 0.6),
    };

    let raw = read_expression_csv(&cfg.expression)?;
    let mut matrix = clean_matrix(&raw)?;
    if let Some(annotation_path) = &cfg.annotation {
        let annotation = read_annotation_csv(annotation_path)?;
        matrix = aggregate_by_celltype(&matrix, &annotation)?;
    }
    let gene_count = matrix.row_names.len();
    let graph = correlation_network(&matrix, cfg.threshold)?;
    if graph.edge_count() == 0 {
        eprintln!(
            "warning: threshold {} produced an empty edge set",
            cfg.threshold
        );
    }

    let name = cfg
        .expression
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "bio".into());
    let edge_count = graph.edge_count();
    let ds = Dataset::new(name, 1, vec![graph], Split::all_in_train(1))?;
    save_dataset(&ds, &cfg.out)?;
    ensure_dir(&cfg.out)?;
    write_json_file(&cfg.out.join("config.json"), &cfg)?;
    println!(
        "built a {gene_count}-gene network with {edge_count} edges -> {}",
        cfg.out.display()
    );
    Ok(())
}
