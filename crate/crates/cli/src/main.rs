//! `cftk`: command-line front end for the counterfactual augmentation toolkit.
//!
//! Exit codes: 0 on success, 1 for usage and configuration errors, 2 for
//! failures while running (backend errors, degenerate inputs, failed
//! conformance checks).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod augment;
mod backend;
mod config;
mod eval;
mod pipeline;
mod train;

/// A problem with the invocation or configuration (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A run that completed but did not meet its contract (exit code 2).
#[derive(Debug)]
pub struct RuntimeFailure(pub String);

impl std::fmt::Display for RuntimeFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for RuntimeFailure {}

#[derive(Parser)]
#[command(name = "cftk", version, about = "Counterfactual data augmentation toolkit")]
struct Cli {
    /// Log progress (repeat for debug output)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Dictionary-based counterfactual augmentation or substitution
    Augment(augment::AugmentArgs),
    /// Seed, mask, infill and filter parallel counterfactual data
    Pipeline(pipeline::PipelineArgs),
    /// Train the toy generator with a frozen discriminator
    Train(train::TrainArgs),
    /// Generate counterfactuals with a trained toy model
    Generate(train::GenerateArgs),
    /// Evaluation metrics
    #[command(subcommand)]
    Eval(eval::EvalCommand),
    /// Backend utilities
    #[command(subcommand)]
    Backend(backend::BackendCommand),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use cftk_core::Error as E;
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if cause.is::<RuntimeFailure>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io { .. }
                | E::Parse { .. }
                | E::DuplicateId { .. }
                | E::DuplicateDictionaryWord { .. }
                | E::WordList { .. }
                | E::Unsupported(_)
                | E::Config(_)
                | E::Checkpoint(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

/// The error chain joined with `: `, skipping causes whose text the
/// message already contains.
fn describe(err: &anyhow::Error) -> String {
    let mut message = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !message.contains(&text) {
            if !message.is_empty() {
                message.push_str(": ");
            }
            message.push_str(&text);
        }
    }
    message
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Augment(args) => augment::run(args),
        Command::Pipeline(args) => pipeline::run(args),
        Command::Train(args) => train::run(args),
        Command::Generate(args) => train::generate(args),
        Command::Eval(cmd) => eval::run(cmd),
        Command::Backend(cmd) => backend::run(cmd),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
