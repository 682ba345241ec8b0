use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use genspec::harness::{
    run_experiment, summarize, write_csv, DatasetSource, ExperimentConfig, Mode,
};
use genspec::Result;

#[derive(Parser)]
#[command(name = "genspec", about = "Safe query-specialization experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment sweep and write CSV results.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Click-model relevance slope.
    #[arg(long)]
    alpha: Option<f64>,
    /// Confidence levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    epsilon: Option<Vec<f64>>,
    /// Selection-slice fraction of the log split.
    #[arg(long)]
    beta: Option<f64>,
    /// Click budgets, comma separated, ascending.
    #[arg(long, value_delimiter = ',')]
    budgets: Option<Vec<usize>>,
    /// Seeded repeats per budget.
    #[arg(long)]
    repeats: Option<usize>,
    /// Base random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Experiment variants: genspec, sea, bandits, no-bounds.
    #[arg(long, value_delimiter = ',')]
    mode: Option<Vec<Mode>>,
    /// Directory with LETOR train.txt/vali.txt/test.txt.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Synthetic data overrides as `key=value` pairs (e.g.
    /// `train_queries=50,docs_per_query=5`), or `default`.
    #[arg(long)]
    synthetic: Option<String>,
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(alpha) = args.alpha {
        cfg.alpha = alpha;
    }
    if let Some(eps) = &args.epsilon {
        cfg.epsilons = eps.clone();
    }
    if let Some(beta) = args.beta {
        cfg.beta = beta;
    }
    if let Some(budgets) = &args.budgets {
        cfg.budgets = budgets.clone();
    }
    if let Some(repeats) = args.repeats {
        cfg.repeats = repeats;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    if let Some(modes) = &args.mode {
        let mut modes = modes.clone();
        modes.sort_unstable();
        modes.dedup();
        cfg.modes = modes;
    }
    if let Some(dir) = &args.dataset {
        cfg.source = DatasetSource::Letor(dir.clone());
    }
    if let Some(spec) = &args.synthetic {
        let mut lines = String::from("dataset = synthetic\n");
        if spec != "default" {
            for pair in spec.split(',') {
                lines.push_str(&pair.replace('=', " = "));
                lines.push('\n');
            }
        }
        let synthetic_only = ExperimentConfig::from_text(&lines)?;
        cfg.source = synthetic_only.source;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &RunArgs) -> Result<()> {
    let cfg = build_config(args)?;
    let rows = run_experiment(&cfg)?;
    let csv = write_csv(&rows);
    match &cfg.out {
        Some(path) => {
            std::fs::write(path, &csv)?;
            eprintln!("wrote {} rows to {}", rows.len(), path.display());
        }
        None => print!("{csv}"),
    }
    let summary = summarize(&rows)?;
    eprintln!("{:<20} {:>8} {:>9} {:>19} {:>19}", "method", "epsilon", "budget", "train_ndcg", "test_ndcg");
    for s in summary {
        let epsilon = s.epsilon.map_or(String::new(), |e| e.to_string());
        eprintln!(
            "{:<20} {:>8} {:>9} {:>9.4} ± {:>6.4} {:>9.4} ± {:>6.4}",
            s.method, epsilon, s.budget, s.train_mean, s.train_stddev, s.test_mean, s.test_stddev
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
