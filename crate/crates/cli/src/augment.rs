//! `cftk augment`: word-pair substitution over a corpus.

use std::path::{Path, PathBuf};

use anyhow::Result;
use cftk_core::corpus::{load_corpus, save_corpus, CorpusFormat};
use cftk_core::dictionary::{
    build_name_pairs, substitute_corpus, GenderDictionary, NamePairing, NameTable, SubstitutionMode,
};
use clap::{Args, ValueEnum};

use crate::config::{RunConfig, BUILTIN};
use crate::CommonArgs;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    /// Keep every record and append its counterfactual
    Cda,
    /// Replace a seeded fraction of records by their counterfactuals
    Cds,
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Input corpus (JSONL, or TSV by extension)
    #[arg(long = "in")]
    pub input: Option<PathBuf>,

    /// Word-pair TSV, or `builtin` for the shipped list
    #[arg(long)]
    pub dict: Option<PathBuf>,

    /// Name frequency CSV (`name,female_count,male_count`)
    #[arg(long)]
    pub names: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,

    /// Share of records replaced in `cds` mode
    #[arg(long)]
    pub fraction: Option<f64>,

    /// Seed for the `cds` sample
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn load_dictionary(path: &Path) -> Result<GenderDictionary> {
    if path == Path::new(BUILTIN) {
        return Ok(GenderDictionary::builtin());
    }
    Ok(GenderDictionary::from_file(path)?)
}

pub fn load_names(path: Option<&Path>, specificity: f64) -> Result<NamePairing> {
    match path {
        Some(p) => Ok(build_name_pairs(&NameTable::from_file(p)?, specificity)?),
        None => Ok(NamePairing::empty()),
    }
}

fn apply_flags(config: &mut RunConfig, args: &AugmentArgs) {
    let p = &mut config.paths;
    p.input = args.input.clone().or(p.input.take());
    p.dictionary = args.dict.clone().or(p.dictionary.take());
    p.names = args.names.clone().or(p.names.take());
    p.output = args.common.out.clone().or(p.output.take());
    let a = &mut config.augment;
    if let Some(mode) = args.mode {
        a.mode = match mode {
            ModeArg::Cda => SubstitutionMode::CdaAugment,
            ModeArg::Cds => SubstitutionMode::CdsSubstitute,
        };
    }
    a.fraction = args.fraction.unwrap_or(a.fraction);
    a.seed = args.seed.unwrap_or(a.seed);
}

pub fn run(args: AugmentArgs) -> Result<()> {
    let mut config = RunConfig::from_args(args.common.config.as_deref())?;
    apply_flags(&mut config, &args);
    let input = RunConfig::require(&config.paths.input, "input corpus", "--in")?;
    let dict_path = RunConfig::require(&config.paths.dictionary, "dictionary", "--dict")?;
    let out = config
        .paths
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from("cftk-augment"));

    let dict = load_dictionary(dict_path)?;
    let names = load_names(config.paths.names.as_deref(), config.augment.name_specificity)?;
    let corpus = load_corpus(input, CorpusFormat::from_path(input))?;
    let a = &config.augment;
    let (result, summary) = substitute_corpus(&corpus, &dict, &names, a.mode, a.fraction, a.seed)?;

    config.write_resolved(&out)?;
    save_corpus(&result, out.join("corpus.jsonl"), CorpusFormat::Jsonl)?;
    let summary_json = serde_json::to_string_pretty(&summary)?;
    std::fs::write(out.join("summary.json"), summary_json.clone() + "\n")?;
    println!("{summary_json}");
    Ok(())
}
