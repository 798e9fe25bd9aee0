//! The JSON run configuration shared by every subcommand.
//!
//! A run starts from [`RunConfig::default`], optionally replaced by a config
//! file, then command-line flags are applied on top. Relative paths in a
//! config file are resolved against the file's directory. The resolved
//! configuration is written next to the outputs so a run can be repeated
//! with `--config <out>/resolved_config.json`.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cftk_core::backends::{BackendConfig, ENDPOINT_ENV};
use cftk_core::biobjective::TrainConfig;
use cftk_core::dictionary::SubstitutionMode;
use cftk_core::eval::Word2VecConfig;
use cftk_core::pipeline::{AblationPreset, PipelineConfig};
use serde::{Deserialize, Serialize};

use crate::UsageError;

pub const RESOLVED_CONFIG: &str = "resolved_config.json";

/// Dictionary value selecting the shipped word-pair list.
pub const BUILTIN: &str = "builtin";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Corpus, parallel data or predictions, depending on the subcommand.
    pub input: Option<PathBuf>,
    /// Output directory.
    pub output: Option<PathBuf>,
    /// Word-pair TSV, or `"builtin"`.
    pub dictionary: Option<PathBuf>,
    /// `name,female_count,male_count` CSV.
    pub names: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    /// WEAT spec JSON, or `"career"` / `"pleasant"`.
    pub weat_spec: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentOptions {
    pub mode: SubstitutionMode,
    /// Share of records replaced in substitute mode.
    pub fraction: f64,
    pub seed: u64,
    pub name_specificity: f64,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        AugmentOptions {
            mode: SubstitutionMode::CdaAugment,
            fraction: 0.5,
            seed: 0,
            name_specificity: 0.8,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub paths: Paths,
    pub augment: AugmentOptions,
    pub backend: BackendConfig,
    pub pipeline: PipelineConfig,
    /// When set, overrides `pipeline.stages` (and `train.lambda_disc` for
    /// variants trained without a discriminator).
    pub ablation: Option<AblationPreset>,
    pub train: TrainConfig,
    /// Train on this many synthetic template pairs instead of `paths.input`.
    pub synthetic_pairs: Option<usize>,
    pub word2vec: Word2VecConfig,
}

fn is_keyword(p: &Path) -> bool {
    matches!(p.to_str(), Some(BUILTIN | "career" | "pleasant"))
}

fn rebase(path: &mut Option<PathBuf>, base: &Path) {
    if let Some(p) = path {
        if p.is_relative() && !is_keyword(p) {
            *p = base.join(&*p);
        }
    }
}

impl RunConfig {
    /// Parses a config file; errors name the offending key.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut config: RunConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| UsageError(format!("{}: key `{}`: {}", origin.display(), e.path(), e.inner())))?;
        let base = origin.parent().unwrap_or(Path::new(""));
        config.rebase_paths(base);
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::parse(&text, path)
    }

    /// The config file when given, defaults otherwise; the endpoint
    /// environment variable then overrides the configured endpoint.
    pub fn from_args(path: Option<&Path>) -> Result<Self> {
        let mut config = match path {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Ok(endpoint) = std::env::var(ENDPOINT_ENV) {
            if !endpoint.is_empty() {
                config.backend.endpoint = Some(endpoint);
            }
        }
        Ok(config)
    }

    fn rebase_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for path in [
            &mut p.input,
            &mut p.output,
            &mut p.dictionary,
            &mut p.names,
            &mut p.model,
            &mut p.embeddings,
            &mut p.weat_spec,
        ] {
            rebase(path, base);
        }
        self.backend.resolve_paths(base);
    }

    /// Makes every path absolute so the echo does not depend on the
    /// directory it is re-run from.
    fn absolutized(&self) -> Result<Self> {
        let mut out = self.clone();
        let cwd = std::env::current_dir().context("current directory")?;
        out.rebase_paths(&cwd);
        Ok(out)
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(RESOLVED_CONFIG);
        let json = serde_json::to_string_pretty(&self.absolutized()?)?;
        std::fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn require<'a>(value: &'a Option<PathBuf>, what: &str, flag: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| UsageError(format!("no {what} given (use {flag} or the config file)")).into())
    }
}
