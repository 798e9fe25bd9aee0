//! `cftk eval`: perplexity, transfer accuracy, fairness, WEAT and the
//! ablation report.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::Result;
use cftk_core::backends::BackendSet;
use cftk_core::corpus::{load_corpus, CorpusFormat, Gender};
use cftk_core::eval::{
    ablation_report, load_fairness_csv, perplexity, tprd_fprd, train_word2vec, transfer_accuracy, weat, EmbeddingTable,
    TransferInstance, VariantMetrics, WeatSpec,
};
use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::backend::BackendArgs;
use crate::config::RunConfig;
use crate::{CommonArgs, UsageError};

#[derive(Subcommand, Debug)]
pub enum EvalCommand {
    /// Corpus and per-record perplexity under the language-model backend
    Ppl {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        backend: BackendArgs,
        /// Corpus to score
        #[arg(long = "in")]
        input: Option<PathBuf>,
    },
    /// Gender transfer accuracy of counterfactuals
    Transfer {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        backend: BackendArgs,
        /// JSONL rows with `target_text` and `source_gender`
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Count an instance as flipped or not instead of averaging probabilities
        #[arg(long)]
        hard: bool,
    },
    /// True- and false-positive rate differences
    Fairness {
        #[command(flatten)]
        common: CommonArgs,
        /// CSV with columns y, y_hat, group
        #[arg(long)]
        pred: Option<PathBuf>,
    },
    /// Embedding association test
    Weat(WeatArgs),
    /// Ablation table from per-variant metrics
    Report {
        #[command(flatten)]
        common: CommonArgs,
        /// JSON array of per-variant metrics
        #[arg(long)]
        variants: PathBuf,
        #[arg(long, value_enum, default_value = "markdown")]
        format: ReportFormat,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReportFormat {
    Markdown,
    Tsv,
}

#[derive(Args, Debug)]
pub struct WeatArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Embedding file (`vocab_size dim` header, then one word per line)
    #[arg(long, conflicts_with = "corpus")]
    pub embeddings: Option<PathBuf>,

    /// Train word2vec on this corpus instead of reading embeddings
    #[arg(long)]
    pub corpus: Option<PathBuf>,

    /// WEAT spec JSON, or `career` / `pleasant` for the shipped specs
    #[arg(long)]
    pub spec: Option<PathBuf>,

    /// Embedding dimension when training
    #[arg(long)]
    pub dim: Option<usize>,

    /// Training passes over the corpus
    #[arg(long)]
    pub epochs: Option<usize>,

    /// Training threads; 1 gives reproducible embeddings
    #[arg(long)]
    pub threads: Option<usize>,

    /// Seed for initialisation and negative sampling
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Prints `value` as JSON and, with an output directory, writes it there
/// together with the resolved configuration.
fn emit<T: Serialize>(config: &mut RunConfig, common: &CommonArgs, file: &str, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    println!("{json}");
    config.paths.output = common.out.clone().or(config.paths.output.take());
    if let Some(out) = &config.paths.output {
        config.write_resolved(out)?;
        std::fs::write(out.join(file), json + "\n")?;
    }
    Ok(())
}

/// The fields of a parallel-data or generated row that transfer accuracy needs.
#[derive(Deserialize)]
struct TransferRow {
    target_text: String,
    source_gender: Option<Gender>,
}

fn read_transfer_rows(path: &Path) -> Result<Vec<TransferInstance>> {
    let file = File::open(path).map_err(|e| cftk_core::Error::Io {
        path: path.into(),
        source: e,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| cftk_core::Error::Parse {
            path: path.into(),
            line: i + 1,
            message,
        };
        let row: TransferRow = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let gender = row
            .source_gender
            .ok_or_else(|| parse_err("missing source_gender".into()))?;
        out.push(TransferInstance {
            original_gender: gender,
            text: row.target_text,
        });
    }
    Ok(out)
}

fn load_spec(path: &Path) -> Result<WeatSpec> {
    Ok(match path.to_str() {
        Some("career") => WeatSpec::career(),
        Some("pleasant") => WeatSpec::pleasant(),
        _ => WeatSpec::load(path)?,
    })
}

#[derive(Serialize)]
struct TransferReport {
    transfer_accuracy: f64,
    hard: bool,
    instances: usize,
}

#[derive(Serialize)]
struct WeatReport<'a> {
    statistic: f64,
    effect_size: f64,
    associations: &'a [(String, f64)],
}

fn run_weat(args: WeatArgs) -> Result<()> {
    let mut config = RunConfig::from_args(args.common.config.as_deref())?;
    let p = &mut config.paths;
    p.embeddings = args.embeddings.clone().or(p.embeddings.take());
    p.weat_spec = args.spec.clone().or(p.weat_spec.take());
    if args.corpus.is_some() {
        p.input = args.corpus.clone();
        p.embeddings = None;
    }
    let w = &mut config.word2vec;
    w.dim = args.dim.unwrap_or(w.dim);
    w.epochs = args.epochs.unwrap_or(w.epochs);
    w.threads = args.threads.unwrap_or(w.threads);
    w.seed = args.seed.unwrap_or(w.seed);

    let spec = load_spec(RunConfig::require(&config.paths.weat_spec, "WEAT spec", "--spec")?)?;
    let table = match (&config.paths.embeddings, &config.paths.input) {
        (Some(path), _) => EmbeddingTable::load(path)?,
        (None, Some(corpus)) => {
            let corpus = load_corpus(corpus, CorpusFormat::from_path(corpus))?;
            let table = train_word2vec(&corpus, &config.word2vec)?;
            if let Some(out) = args.common.out.as_ref().or(config.paths.output.as_ref()) {
                std::fs::create_dir_all(out)?;
                table.save(out.join("embeddings.txt"))?;
            }
            table
        }
        (None, None) => return Err(UsageError("no embeddings given (use --embeddings or --corpus)".into()).into()),
    };
    let result = weat(&table, &spec)?;
    let report = WeatReport {
        statistic: result.statistic,
        effect_size: result.effect_size,
        associations: &result.associations,
    };
    emit(&mut config, &args.common, "weat.json", &report)
}

pub fn run(cmd: EvalCommand) -> Result<()> {
    match cmd {
        EvalCommand::Ppl { common, backend, input } => {
            let mut config = RunConfig::from_args(common.config.as_deref())?;
            backend.apply(&mut config.backend);
            config.paths.input = input.or(config.paths.input.take());
            let path = RunConfig::require(&config.paths.input, "corpus", "--in")?;
            let corpus = load_corpus(path, CorpusFormat::from_path(path))?;
            let backends = BackendSet::from_config(&config.backend)?;
            let report = perplexity(&corpus, backends.lm.as_ref())?;
            emit(&mut config, &common, "perplexity.json", &report)
        }
        EvalCommand::Transfer {
            common,
            backend,
            input,
            hard,
        } => {
            let mut config = RunConfig::from_args(common.config.as_deref())?;
            backend.apply(&mut config.backend);
            config.paths.input = input.or(config.paths.input.take());
            let path = RunConfig::require(&config.paths.input, "counterfactual rows", "--in")?;
            let instances = read_transfer_rows(path)?;
            let backends = BackendSet::from_config(&config.backend)?;
            let acc = transfer_accuracy(&instances, backends.classifier.as_ref(), hard)?;
            let report = TransferReport {
                transfer_accuracy: acc,
                hard,
                instances: instances.len(),
            };
            emit(&mut config, &common, "transfer.json", &report)
        }
        EvalCommand::Fairness { common, pred } => {
            let mut config = RunConfig::from_args(common.config.as_deref())?;
            config.paths.input = pred.or(config.paths.input.take());
            let path = RunConfig::require(&config.paths.input, "predictions", "--pred")?;
            let metrics = tprd_fprd(&load_fairness_csv(path)?)?;
            emit(&mut config, &common, "fairness.json", &metrics)
        }
        EvalCommand::Weat(args) => run_weat(args),
        EvalCommand::Report {
            common,
            variants,
            format,
        } => {
            let text = std::fs::read_to_string(&variants).map_err(|e| cftk_core::Error::Io {
                path: variants.clone(),
                source: e,
            })?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            let rows: Vec<VariantMetrics> = serde_path_to_error::deserialize(de)
                .map_err(|e| UsageError(format!("{}: key `{}`: {}", variants.display(), e.path(), e.inner())))?;
            let table = ablation_report(&rows)?;
            for w in &table.warnings {
                eprintln!("warning: {w}");
            }
            let (rendered, file) = match format {
                ReportFormat::Markdown => (table.to_markdown(), "ablation.md"),
                ReportFormat::Tsv => (table.to_tsv(), "ablation.tsv"),
            };
            print!("{rendered}");
            if let Some(out) = &common.out {
                let mut config = RunConfig::from_args(common.config.as_deref())?;
                config.paths.input = Some(variants);
                config.paths.output = Some(out.clone());
                config.write_resolved(out)?;
                std::fs::write(out.join(file), rendered)?;
            }
            Ok(())
        }
    }
}
