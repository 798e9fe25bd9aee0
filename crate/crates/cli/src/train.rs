//! `cftk train` and `cftk generate`: the toy bi-objective generator.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cftk_core::biobjective::{synthetic_corpus, train as train_model, ToyModel, TrainingPair};
use cftk_core::corpus::{load_corpus, write_jsonl, CorpusFormat, Gender};
use cftk_core::pipeline::PairRow;
use clap::Args;
use serde::Serialize;

use crate::config::RunConfig;
use crate::{CommonArgs, UsageError};

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Parallel data (`parallel.jsonl` from `cftk pipeline`)
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Train on this many synthetic template pairs instead of --data
    #[arg(long)]
    pub synthetic: Option<usize>,

    /// Train without the discriminator (loss weight 0)
    #[arg(long)]
    pub no_discriminator: bool,

    /// Weight of the discriminator loss
    #[arg(long, conflicts_with = "no_discriminator")]
    pub lambda: Option<f64>,

    /// Generator training epochs
    #[arg(long)]
    pub epochs: Option<usize>,

    /// Generator learning rate
    #[arg(long)]
    pub lr: Option<f64>,

    /// Pairs per update
    #[arg(long)]
    pub batch_size: Option<usize>,

    /// Seed for initialisation and shuffling
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Reads `PairRow` lines; blank lines are skipped.
pub fn read_pair_rows(path: &Path) -> Result<Vec<PairRow>> {
    let file = File::open(path).map_err(|e| cftk_core::Error::Io {
        path: path.into(),
        source: e,
    })?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: PairRow = serde_json::from_str(&line).map_err(|e| cftk_core::Error::Parse {
            path: path.into(),
            line: i + 1,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

fn apply_flags(config: &mut RunConfig, args: &TrainArgs) {
    let p = &mut config.paths;
    p.input = args.data.clone().or(p.input.take());
    p.output = args.common.out.clone().or(p.output.take());
    if args.synthetic.is_some() {
        config.synthetic_pairs = args.synthetic;
    }
    let t = &mut config.train;
    if let Some(preset) = config.ablation {
        if !preset.uses_discriminator() {
            t.lambda_disc = 0.0;
        }
    }
    if args.no_discriminator {
        t.lambda_disc = 0.0;
    }
    t.lambda_disc = args.lambda.unwrap_or(t.lambda_disc);
    t.epochs = args.epochs.unwrap_or(t.epochs);
    t.lr = args.lr.unwrap_or(t.lr);
    t.batch_size = args.batch_size.unwrap_or(t.batch_size);
    t.seed = args.seed.unwrap_or(t.seed);
}

pub fn run(args: TrainArgs) -> Result<()> {
    let mut config = RunConfig::from_args(args.common.config.as_deref())?;
    apply_flags(&mut config, &args);
    config.train.validate()?;
    let out = config
        .paths
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from("cftk-train"));

    let pairs: Vec<TrainingPair> = match (config.synthetic_pairs, &config.paths.input) {
        (Some(n), _) => synthetic_corpus(n, config.train.seed)
            .iter()
            .map(TrainingPair::from)
            .collect(),
        (None, Some(path)) => read_pair_rows(path)?
            .into_iter()
            .map(|r| TrainingPair {
                source: r.source_text,
                target: r.target_text,
                source_gender: r.source_gender,
            })
            .collect(),
        (None, None) => return Err(UsageError("no training data given (use --data or --synthetic)".into()).into()),
    };

    config.write_resolved(&out)?;
    let log_path = out.join("train_log.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?);
    let mut log_error = None;
    let (model, summary) = train_model(&pairs, &config.train, |entry| {
        if log_error.is_none() {
            let line = serde_json::to_string(entry).expect("log entries serialize");
            if let Err(e) = writeln!(log, "{line}") {
                log_error = Some(e);
            }
        }
    })?;
    if let Some(e) = log_error {
        return Err(e).context("writing the training log");
    }
    log.flush()?;
    model.save(&out.join("model.json"))?;
    let summary_json = serde_json::to_string_pretty(&summary)?;
    std::fs::write(out.join("summary.json"), summary_json.clone() + "\n")?;
    println!("{summary_json}");
    Ok(())
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Trained model (`model.json`)
    #[arg(long)]
    pub model: Option<PathBuf>,

    /// Corpus to rewrite; gender labels are carried to the output
    #[arg(long = "in", conflicts_with = "text")]
    pub input: Option<PathBuf>,

    /// A single sentence to rewrite, printed to stdout
    #[arg(long)]
    pub text: Option<String>,
}

/// One line of `generated.jsonl`.
#[derive(Debug, Serialize)]
struct GeneratedRow {
    id: String,
    source_text: String,
    target_text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    source_gender: Option<Gender>,
}

pub fn generate(args: GenerateArgs) -> Result<()> {
    let mut config = RunConfig::from_args(args.common.config.as_deref())?;
    let p = &mut config.paths;
    p.model = args.model.clone().or(p.model.take());
    p.input = args.input.clone().or(p.input.take());
    p.output = args.common.out.clone().or(p.output.take());
    let model_path = RunConfig::require(&config.paths.model, "model", "--model")?;
    let model = ToyModel::load(model_path)?;

    if let Some(text) = &args.text {
        println!("{}", model.generate(text));
        return Ok(());
    }
    let input = RunConfig::require(&config.paths.input, "input corpus", "--in or --text")?;
    let corpus = load_corpus(input, CorpusFormat::from_path(input))?;
    let rows: Vec<GeneratedRow> = corpus
        .records
        .iter()
        .map(|r| GeneratedRow {
            id: r.id.clone(),
            source_text: r.text.clone(),
            target_text: model.generate(&r.text),
            source_gender: r.gender,
        })
        .collect();
    let out = config
        .paths
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from("cftk-generate"));
    config.write_resolved(&out)?;
    write_jsonl(&out.join("generated.jsonl"), &rows)?;
    println!(
        "{} counterfactuals written to {}",
        rows.len(),
        out.join("generated.jsonl").display()
    );
    Ok(())
}
