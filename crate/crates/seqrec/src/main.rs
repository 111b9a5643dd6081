//! Command-line front end for the recommendation pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use seqrec::config::ExperimentConfig;
use seqrec::pipeline::{
    cmd_ablate, cmd_evaluate, cmd_prepare, cmd_recommend, cmd_train, format_report_table,
    SystemKind,
};

#[derive(Parser)]
#[command(
    name = "seqrec",
    version,
    about = "Sequence-aware recommender pipeline: prepare data, train models, evaluate, ablate, recommend"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file (flat `key = value` text).
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_method(s: &str) -> Result<SystemKind, String> {
    s.parse().map_err(|e: seqrec::Error| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Load the log, split it, and build vocabulary, sequences, and targets.
    Prepare {
        #[command(flatten)]
        common: Common,
    },
    /// Train one system on the prepared artifacts.
    Train {
        #[command(flatten)]
        common: Common,
        /// Which system: seq, cf, mf, or ngram.
        #[arg(long, value_parser = parse_method)]
        method: SystemKind,
    },
    /// Evaluate systems over the validation users (MAP@K, NDCG).
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated systems to compare.
        #[arg(long, value_delimiter = ',', value_parser = parse_method,
              default_value = "seq,cf,mf,ngram,random")]
        methods: Vec<SystemKind>,
    },
    /// Re-run training and evaluation with the most popular items removed.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', value_parser = parse_method,
              default_value = "seq,cf,mf,ngram,random")]
        methods: Vec<SystemKind>,
        /// Override ablation.top_fraction.
        #[arg(long)]
        top_fraction: Option<f64>,
    },
    /// Export top-K recommendation lists.
    Recommend {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_method, default_value = "seq")]
        method: SystemKind,
        /// Override ranking.top_k.
        #[arg(long)]
        k: Option<usize>,
        /// File with one user id per line (defaults to the validation users).
        #[arg(long)]
        users: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Single-line, machine-readable failure on stderr.
            let message = e.to_string().replace('\n', " ");
            eprintln!("seqrec: error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(common: &Common) -> seqrec::Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
        config.model.seed = seed;
    }
    Ok(config)
}

fn run() -> seqrec::Result<()> {
    match Cli::parse().command {
        Command::Prepare { common } => {
            let config = load_config(&common)?;
            let summary = cmd_prepare(&config)?;
            for warning in &summary.warnings {
                eprintln!("seqrec: warning: {warning}");
            }
            println!(
                "prepared {} users over {} items from {} rows ({} rejected) -> {}",
                summary.users,
                summary.items,
                summary.rows_read,
                summary.rejects,
                config.output_dir.display()
            );
        }
        Command::Train { common, method } => {
            let config = load_config(&common)?;
            let summary = cmd_train(&config, method)?;
            match (&summary.report, summary.final_mse) {
                (Some(report), _) => {
                    let first = report.epochs.first().map_or(f64::NAN, |e| e.train_loss);
                    let last = report.epochs.last().map_or(f64::NAN, |e| e.train_loss);
                    println!(
                        "trained {method}: train loss {first:.4} -> {last:.4}, best epoch {}, {} SGD steps -> {}",
                        report.best_epoch,
                        report.sgd_steps,
                        summary.checkpoint.display()
                    );
                }
                (None, Some(mse)) => println!(
                    "trained {method}: observed-entry MSE {mse:.6} -> {}",
                    summary.checkpoint.display()
                ),
                (None, None) => println!(
                    "trained {method} -> {}",
                    summary.checkpoint.display()
                ),
            }
        }
        Command::Evaluate { common, methods } => {
            let config = load_config(&common)?;
            let report = cmd_evaluate(&config, &methods)?;
            print!("{}", format_report_table(&report));
        }
        Command::Ablate {
            common,
            methods,
            top_fraction,
        } => {
            let mut config = load_config(&common)?;
            if let Some(fraction) = top_fraction {
                config.ablation_top_fraction = fraction;
            }
            let summary = cmd_ablate(&config, &methods)?;
            println!(
                "ablation removed {} items: {}",
                summary.removed_items.len(),
                summary
                    .removed_items
                    .iter()
                    .take(10)
                    .cloned()
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            print!("{}", format_report_table(&summary.report));
        }
        Command::Recommend {
            common,
            method,
            k,
            users,
        } => {
            let config = load_config(&common)?;
            let user_list = match users {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| seqrec::Error::io(&path, e))?;
                    Some(
                        text.lines()
                            .map(str::trim)
                            .filter(|l| !l.is_empty())
                            .map(String::from)
                            .collect::<Vec<_>>(),
                    )
                }
                None => None,
            };
            let k = k.unwrap_or(config.ranking_top_k);
            let summary = cmd_recommend(&config, method, k, user_list)?;
            for user in &summary.unknown_users {
                eprintln!("seqrec: warning: unknown user id `{user}` skipped");
            }
            println!(
                "wrote top-{k} lists for {} users ({} fallback) -> {}",
                summary.users_written,
                summary.fallback_users,
                summary.csv_path.display()
            );
        }
    }
    Ok(())
}
