mod commands;
mod manifest;
mod models;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Conversation translation between English and one foreign language.
#[derive(Debug, Parser)]
#[command(
    name = "bimsmt",
    version = concat!(env!("CARGO_PKG_VERSION"), " (checkpoint format 1, corpus format jsonl-1)")
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Run config sources. Flags beat the config file, which beats defaults.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Root seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Training conversations (JSONL); overrides `train` in the config.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Dev conversations (JSONL) used for model selection.
    #[arg(long)]
    dev: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Builds conversations from a tagged parallel corpus and splits them.
    Extract(commands::ExtractArgs),
    /// Trains one or both sentence-level translation directions.
    TrainBase(commands::TrainBaseArgs),
    /// Trains the per-language RNN language models.
    TrainRnnlm(commands::TrainRnnlmArgs),
    /// Trains the contextual model starting from base checkpoints.
    TrainContext(commands::TrainContextArgs),
    /// Translates conversations in order.
    Translate(commands::TranslateArgs),
    /// Scores hypotheses against references.
    Evaluate(commands::EvaluateArgs),
    /// BLEU of the base model and of the contextual model under masks.
    Ablate(commands::AblateArgs),
    /// Corpus statistics as JSON.
    Stats(commands::StatsArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    // clap exits with 2 on usage errors and 0 for --help/--version
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Extract(a) => commands::extract(a),
        Command::TrainBase(a) => commands::train_base(a),
        Command::TrainRnnlm(a) => commands::train_rnnlm(a),
        Command::TrainContext(a) => commands::train_context(a),
        Command::Translate(a) => commands::translate(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Stats(a) => commands::stats(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e.downcast_ref::<bimsmt::Error>() {
                Some(bimsmt::Error::Config(_) | bimsmt::Error::Parse { .. }) => "config",
                Some(bimsmt::Error::Checkpoint(_)) => "checkpoint",
                Some(bimsmt::Error::Io(_)) => "io",
                Some(_) => "data",
                None if e.downcast_ref::<std::io::Error>().is_some() => "io",
                None => "data",
            };
            let msg = serde_json::json!({ "error": kind, "message": format!("{e:#}") });
            eprintln!("{msg}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn version_names_the_checkpoint_format() {
        let v = Cli::command().get_version().unwrap().to_string();
        assert!(v.contains(&format!("checkpoint format {}", bimsmt::tensor::CHECKPOINT_VERSION)));
    }
}
