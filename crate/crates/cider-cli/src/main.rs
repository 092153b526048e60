use cider_cli::commands::{bio_prep, evaluate, explain, generate, train_task};
use cider_cli::exit_code;
use clap::{Parser, Subcommand};

/// Causal subgraph inference: generate benchmarks, train models, explain
/// predictions, and report explanation quality.
#[derive(Parser)]
#[command(name = "cider", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic motif benchmark dataset.
    Generate(generate::GenerateArgs),
    /// Train the graph classifier to be explained.
    TrainTask(train_task::TrainTaskArgs),
    /// Train the explainer and trace test graphs.
    Explain(explain::ExplainArgs),
    /// Score explanations at several sparsity levels.
    Evaluate(evaluate::EvaluateArgs),
    /// Build a co-expression graph dataset from an expression CSV.
    BioPrep(bio_prep::BioPrepArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => generate::run(args),
        Command::TrainTask(args) => train_task::run(args),
        Command::Explain(args) => explain::run(args),
        Command::Evaluate(args) => evaluate::run(args),
        Command::BioPrep(args) => bio_prep::run(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
