//! `cftk pipeline`: parallel counterfactual data generation.

use std::path::PathBuf;

use anyhow::Result;
use cftk_core::backends::BackendSet;
use cftk_core::corpus::{load_corpus, CorpusFormat};
use cftk_core::pipeline::{run_pipeline, AblationPreset};
use clap::Args;

use crate::augment::{load_dictionary, load_names};
use crate::backend::BackendArgs;
use crate::config::RunConfig;
use crate::{CommonArgs, UsageError};

#[derive(Args, Debug)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    #[command(flatten)]
    pub backend: BackendArgs,

    /// Input corpus with gender labels
    #[arg(long = "in")]
    pub input: Option<PathBuf>,

    /// Word-pair TSV, or `builtin` for the shipped list
    #[arg(long)]
    pub dict: Option<PathBuf>,

    /// Name frequency CSV
    #[arg(long)]
    pub names: Option<PathBuf>,

    /// Mask tokens scoring strictly below this value
    #[arg(long)]
    pub theta: Option<f64>,

    /// Keep pairs whose source-gender probability is below this value
    #[arg(long)]
    pub cutoff: Option<f64>,

    /// Stage preset (mbcda1 .. mbcda6)
    #[arg(long)]
    pub ablation: Option<String>,

    /// Seed passed to the backends
    #[arg(long)]
    pub seed: Option<u64>,
}

fn apply_flags(config: &mut RunConfig, args: &PipelineArgs) -> Result<()> {
    let p = &mut config.paths;
    p.input = args.input.clone().or(p.input.take());
    p.dictionary = args.dict.clone().or(p.dictionary.take());
    p.names = args.names.clone().or(p.names.take());
    p.output = args.common.out.clone().or(p.output.take());
    args.backend.apply(&mut config.backend);
    let pc = &mut config.pipeline;
    pc.theta = args.theta.unwrap_or(pc.theta);
    pc.filtration_cutoff = args.cutoff.unwrap_or(pc.filtration_cutoff);
    pc.seed = args.seed.unwrap_or(pc.seed);
    if let Some(name) = &args.ablation {
        config.ablation = Some(name.parse::<AblationPreset>().map_err(|e| UsageError(e.to_string()))?);
    }
    if let Some(preset) = config.ablation {
        config.pipeline.stages = preset.stages();
    }
    Ok(())
}

pub fn run(args: PipelineArgs) -> Result<()> {
    let mut config = RunConfig::from_args(args.common.config.as_deref())?;
    apply_flags(&mut config, &args)?;
    config.pipeline.validate()?;
    let input = RunConfig::require(&config.paths.input, "input corpus", "--in")?;
    let dict_path = RunConfig::require(&config.paths.dictionary, "dictionary", "--dict")?;
    let out = config
        .paths
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from("cftk-pipeline"));

    let dict = load_dictionary(dict_path)?;
    let names = load_names(config.paths.names.as_deref(), config.augment.name_specificity)?;
    let corpus = load_corpus(input, CorpusFormat::from_path(input))?;
    let backends = BackendSet::from_config(&config.backend)?;
    let output = run_pipeline(&corpus, &dict, &names, &backends, &config.pipeline)?;

    config.write_resolved(&out)?;
    output.write(&out)?;
    println!("{}", serde_json::to_string_pretty(&output.report)?);
    Ok(())
}
