//! The four model roles behind traits: erratic-token scorer, mask infiller,
//! gender classifier and language-model scorer.
//!
//! Two implementations exist for every role: deterministic mocks
//! ([`mock`], [`ngram`]) and an HTTP client ([`http`]) speaking the JSON wire
//! protocol below. Both must pass the same [`conformance`] suite.
//!
//! | endpoint    | request                                   | reply                                  |
//! |-------------|-------------------------------------------|----------------------------------------|
//! | `/score`    | `{"tokens": [str]}`                       | `{"scores": [float]}`                  |
//! | `/infill`   | `{"text": str, "mask_token": "<mask>"}`   | `{"fills": [[str]]}`                   |
//! | `/classify` | `{"text": str}`                           | `{"p_female": float}`                  |
//! | `/lm`       | `{"text": str}`                           | `{"logprob": float, "n_tokens": int}`  |

pub mod conformance;
pub mod http;
pub mod mock;
pub mod ngram;
mod subword;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{TokenSequence, WordList};
use crate::pipeline::MaskedSequence;

pub use subword::{word_scores, SubwordPiece, SubwordSequence, SubwordSplitter};

/// Placeholder rendered for every mask slot.
pub const MASK_TOKEN: &str = "<mask>";

/// Environment variable overriding the HTTP backend endpoint.
pub const ENDPOINT_ENV: &str = "CFTK_BACKEND_ENDPOINT";

#[derive(Debug, Clone, thiserror::Error)]
pub enum BackendError {
    #[error("transport error talking to {endpoint}: {cause}")]
    Transport { endpoint: String, cause: String },

    #[error("protocol error from {endpoint}: {message}")]
    Protocol { endpoint: String, message: String },

    #[error("invalid backend request: {0}")]
    InvalidInput(String),

    #[error("backend role not configured: {0}")]
    Unavailable(String),
}

/// Plausibility logit of one token in context (higher = more plausible).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub word_index: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenderVerdict {
    pub p_female: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmScore {
    /// Natural-log probability of the whole text.
    pub logprob: f64,
    pub n_tokens: usize,
}

pub trait TokenScorer: Send + Sync {
    /// One score per token of `text`, in order.
    fn score_tokens(&self, text: &TokenSequence) -> Result<Vec<TokenScore>, BackendError>;
}

pub trait Infiller: Send + Sync {
    /// One replacement (one or more words) per mask slot, in slot order.
    fn infill(&self, masked: &MaskedSequence) -> Result<Vec<Vec<String>>, BackendError>;
}

pub trait GenderClassifier: Send + Sync {
    fn classify_gender(&self, text: &str) -> Result<GenderVerdict, BackendError>;
}

pub trait LanguageModel: Send + Sync {
    fn lm_logprob(&self, text: &str) -> Result<LmScore, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

/// Files and parameters for the mock backends. Unset entries fall back to
/// neutral behaviour (nothing flagged, default fill, shipped gender lists).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MockConfig {
    /// TSV `anchor<TAB>flagged[<TAB>score]`.
    pub scorer_rules: Option<PathBuf>,
    /// One wordpiece per line (`##` marks continuation pieces).
    pub wordpiece_vocab: Option<PathBuf>,
    /// TSV `left context<TAB>right context<TAB>fill`, `_` matches anything.
    pub infill_rules: Option<PathBuf>,
    pub default_fill: Option<Vec<String>>,
    pub female_words: Option<PathBuf>,
    pub male_words: Option<PathBuf>,
    /// A serialized n-gram model.
    pub lm_model: Option<PathBuf>,
    /// A JSONL corpus to train an n-gram model from at startup.
    pub lm_corpus: Option<PathBuf>,
    pub lm_order: Option<usize>,
    pub lm_lambdas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub timeout_secs: f64,
    pub max_in_flight: usize,
    /// Extra attempts after a transport failure (0 or 1).
    pub retries: u32,
    pub mock: MockConfig,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            endpoint: None,
            timeout_secs: 30.0,
            max_in_flight: 4,
            retries: 0,
            mock: MockConfig::default(),
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.kind == BackendKind::Http && self.endpoint.as_deref().unwrap_or("").is_empty() {
            return Err(crate::Error::Config("http backend requires an endpoint".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(crate::Error::Config("timeout_secs must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(crate::Error::Config("max_in_flight must be at least 1".into()));
        }
        if self.retries > 1 {
            return Err(crate::Error::Config("at most one retry is supported".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    /// Resolves relative mock paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let m = &mut self.mock;
        for p in [
            &mut m.scorer_rules,
            &mut m.wordpiece_vocab,
            &mut m.infill_rules,
            &mut m.female_words,
            &mut m.male_words,
            &mut m.lm_model,
            &mut m.lm_corpus,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// One implementation per role.
#[derive(Clone)]
pub struct BackendSet {
    pub scorer: Arc<dyn TokenScorer>,
    pub infiller: Arc<dyn Infiller>,
    pub classifier: Arc<dyn GenderClassifier>,
    pub lm: Arc<dyn LanguageModel>,
}

impl std::fmt::Debug for BackendSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendSet").finish_non_exhaustive()
    }
}

impl BackendSet {
    pub fn from_config(config: &BackendConfig) -> crate::Result<BackendSet> {
        config.validate()?;
        match config.kind {
            BackendKind::Http => {
                let client = Arc::new(http::HttpBackend::new(
                    config.endpoint.clone().unwrap_or_default(),
                    config.timeout(),
                    config.max_in_flight,
                    config.retries,
                ));
                Ok(BackendSet {
                    scorer: client.clone(),
                    infiller: client.clone(),
                    classifier: client.clone(),
                    lm: client,
                })
            }
            BackendKind::Mock => mock_set(&config.mock),
        }
    }
}

fn mock_set(cfg: &MockConfig) -> crate::Result<BackendSet> {
    let splitter = match &cfg.wordpiece_vocab {
        Some(p) => SubwordSplitter::wordpiece_from_file(p)?,
        None => SubwordSplitter::WholeWord,
    };
    let scorer = match &cfg.scorer_rules {
        Some(p) => mock::LexiconScorer::from_file(p)?,
        None => mock::LexiconScorer::new(Vec::new()),
    }
    .with_splitter(splitter);
    let mut infiller = match &cfg.infill_rules {
        Some(p) => mock::TemplateInfiller::from_file(p)?,
        None => mock::TemplateInfiller::new(Vec::new()),
    };
    if let Some(fill) = &cfg.default_fill {
        infiller = infiller.with_default_fill(fill.clone());
    }
    let classifier = match (&cfg.female_words, &cfg.male_words) {
        (None, None) => mock::LexiconClassifier::builtin(),
        (f, m) => {
            let load = |p: &Option<PathBuf>, builtin| match p {
                Some(p) => WordList::from_file(p),
                None => Ok(WordList::builtin(builtin)),
            };
            mock::LexiconClassifier::new(
                load(f, crate::corpus::BuiltinList::FemaleAttributes)?,
                load(m, crate::corpus::BuiltinList::MaleAttributes)?,
            )
        }
    };
    let lm: Arc<dyn LanguageModel> = match (&cfg.lm_model, &cfg.lm_corpus) {
        (Some(p), _) => Arc::new(ngram::NgramLm::load(p)?),
        (None, Some(p)) => {
            let corpus = crate::corpus::load_corpus(p, crate::corpus::CorpusFormat::from_path(p))?;
            let mut ngram_cfg = ngram::NgramConfig::default();
            if let Some(order) = cfg.lm_order {
                ngram_cfg.order = order;
            }
            if let Some(l) = &cfg.lm_lambdas {
                ngram_cfg.lambdas = l.clone();
            }
            Arc::new(ngram::NgramLm::train(
                corpus.records.iter().map(|r| r.text.as_str()),
                &ngram_cfg,
            )?)
        }
        (None, None) => Arc::new(mock::MissingLm),
    };
    Ok(BackendSet {
        scorer: Arc::new(scorer),
        infiller: Arc::new(infiller),
        classifier: Arc::new(classifier),
        lm,
    })
}
