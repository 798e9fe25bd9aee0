//! Deterministic rule-table backends. Every mock is a pure function of its
//! input and its tables.

use std::path::Path;

use crate::corpus::{BuiltinList, TokenSequence, WordList};
use crate::pipeline::MaskedSequence;
use crate::{Error, Result};

use super::subword::{word_scores, SubwordSplitter};
use super::{BackendError, GenderClassifier, GenderVerdict, Infiller, LanguageModel, LmScore, TokenScore, TokenScorer};

/// Wildcard accepted by the rule tables.
pub const WILDCARD: &str = "_";

const PLAUSIBLE: f64 = 1.0;
const DEFAULT_FLAG_SCORE: f64 = -1.0;

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Table rows, skipping blanks and `#` comments, split on tabs.
fn rows(contents: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    contents.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            None
        } else {
            Some((i + 1, line.split('\t').map(str::trim).collect()))
        }
    })
}

/// When `anchor` occurs in a text, the word `flagged` scores `score`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncompatibilityRule {
    pub anchor: String,
    pub flagged: String,
    pub score: f64,
}

impl IncompatibilityRule {
    pub fn new(anchor: &str, flagged: &str) -> Self {
        IncompatibilityRule {
            anchor: anchor.to_lowercase(),
            flagged: flagged.to_lowercase(),
            score: DEFAULT_FLAG_SCORE,
        }
    }
}

/// Scores every piece +1 unless an incompatibility rule fires; the first
/// piece of a flagged word gets the rule's (negative) score.
#[derive(Debug, Clone)]
pub struct LexiconScorer {
    rules: Vec<IncompatibilityRule>,
    splitter: SubwordSplitter,
}

impl LexiconScorer {
    pub fn new(rules: Vec<IncompatibilityRule>) -> Self {
        LexiconScorer {
            rules,
            splitter: SubwordSplitter::WholeWord,
        }
    }

    pub fn with_splitter(mut self, splitter: SubwordSplitter) -> Self {
        self.splitter = splitter;
        self
    }

    /// Parses `anchor<TAB>flagged[<TAB>score]`; an anchor of `_` always fires.
    pub fn parse(path: &Path, contents: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (line, cols) in rows(contents) {
            let score = match cols.len() {
                2 => DEFAULT_FLAG_SCORE,
                3 => cols[2]
                    .parse::<f64>()
                    .ok()
                    .filter(|s| s.is_finite())
                    .ok_or_else(|| Error::parse(path, line, format!("bad score {:?}", cols[2])))?,
                n => return Err(Error::parse(path, line, format!("expected 2 or 3 columns, found {n}"))),
            };
            rules.push(IncompatibilityRule {
                anchor: cols[0].to_lowercase(),
                flagged: cols[1].to_lowercase(),
                score,
            });
        }
        Ok(LexiconScorer::new(rules))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(path, &read(path)?)
    }

    pub fn rules(&self) -> &[IncompatibilityRule] {
        &self.rules
    }
}

impl TokenScorer for LexiconScorer {
    fn score_tokens(&self, text: &TokenSequence) -> Result<Vec<TokenScore>, BackendError> {
        if text.is_empty() {
            return Err(BackendError::InvalidInput(
                "cannot score an empty token sequence".into(),
            ));
        }
        let lower: Vec<String> = text.surfaces().map(str::to_lowercase).collect();
        let mut flag: Vec<Option<f64>> = vec![None; lower.len()];
        for rule in &self.rules {
            let fires = rule.anchor == WILDCARD || lower.contains(&rule.anchor);
            if !fires {
                continue;
            }
            for (i, w) in lower.iter().enumerate() {
                if *w == rule.flagged {
                    flag[i] = Some(flag[i].map_or(rule.score, |s: f64| s.min(rule.score)));
                }
            }
        }
        let pieces = self.splitter.split(text);
        let firsts = pieces.first_pieces();
        let piece_scores: Vec<f64> = pieces
            .pieces()
            .iter()
            .enumerate()
            .map(|(i, p)| match flag[p.word_index] {
                Some(s) if firsts[p.word_index] == i => s,
                _ => PLAUSIBLE,
            })
            .collect();
        Ok(word_scores(&pieces, &piece_scores))
    }
}

/// Fills a slot whose neighbouring words match `left` and `right`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfillRule {
    /// Words immediately before the slot, or `_`.
    pub left: Vec<String>,
    /// Words immediately after the slot, or `_`.
    pub right: Vec<String>,
    pub fill: Vec<String>,
}

impl InfillRule {
    pub fn new(left: &str, right: &str, fill: &str) -> Self {
        let words = |s: &str| -> Vec<String> {
            if s.trim() == WILDCARD {
                Vec::new()
            } else {
                s.split_whitespace().map(str::to_lowercase).collect()
            }
        };
        InfillRule {
            left: words(left),
            right: words(right),
            fill: fill.split_whitespace().map(str::to_string).collect(),
        }
    }

    fn matches(&self, before: &[String], after: &[String]) -> bool {
        before.ends_with(&self.left) && after.starts_with(&self.right)
    }
}

/// Template infiller. Slots matching no rule get the configured default
/// fill, or keep their original words when no default is set.
#[derive(Debug, Clone)]
pub struct TemplateInfiller {
    rules: Vec<InfillRule>,
    default_fill: Option<Vec<String>>,
}

impl TemplateInfiller {
    pub fn new(rules: Vec<InfillRule>) -> Self {
        TemplateInfiller {
            rules,
            default_fill: None,
        }
    }

    pub fn with_default_fill(mut self, fill: Vec<String>) -> Self {
        self.default_fill = Some(fill);
        self
    }

    pub fn parse(path: &Path, contents: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (line, cols) in rows(contents) {
            if cols.len() != 3 {
                return Err(Error::parse(
                    path,
                    line,
                    format!("expected 3 columns, found {}", cols.len()),
                ));
            }
            let rule = InfillRule::new(cols[0], cols[1], cols[2]);
            if rule.fill.is_empty() {
                return Err(Error::parse(path, line, "empty fill"));
            }
            rules.push(rule);
        }
        Ok(TemplateInfiller::new(rules))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(path, &read(path)?)
    }
}

impl Infiller for TemplateInfiller {
    fn infill(&self, masked: &MaskedSequence) -> Result<Vec<Vec<String>>, BackendError> {
        if masked.slots().is_empty() {
            return Err(BackendError::InvalidInput("infill request without mask slots".into()));
        }
        let (view, positions) = masked.context_view();
        let fills = positions
            .iter()
            .zip(masked.slots())
            .map(|(&pos, slot)| {
                let before = &view[..pos];
                let after = &view[pos + 1..];
                match self.rules.iter().find(|r| r.matches(before, after)) {
                    Some(rule) => rule.fill.clone(),
                    None => match &self.default_fill {
                        Some(fill) => fill.clone(),
                        None => masked.tokens().tokens()[slot.clone()]
                            .iter()
                            .map(|t| t.surface.clone())
                            .collect(),
                    },
                }
            })
            .collect();
        Ok(fills)
    }
}

/// Gender vote over two word lists: `p_female = f / (f + m)`, 0.5 when the
/// text has no listed words.
#[derive(Debug, Clone)]
pub struct LexiconClassifier {
    female: WordList,
    male: WordList,
}

impl LexiconClassifier {
    pub fn new(female: WordList, male: WordList) -> Self {
        LexiconClassifier { female, male }
    }

    /// Uses the shipped attribute lists.
    pub fn builtin() -> Self {
        Self::new(
            WordList::builtin(BuiltinList::FemaleAttributes),
            WordList::builtin(BuiltinList::MaleAttributes),
        )
    }

    pub fn counts(&self, text: &str) -> (usize, usize) {
        let tokens = crate::corpus::tokenize(text);
        let mut f = 0;
        let mut m = 0;
        for w in tokens.surfaces() {
            let w = w.to_lowercase();
            if self.female.contains(&w) {
                f += 1;
            }
            if self.male.contains(&w) {
                m += 1;
            }
        }
        (f, m)
    }
}

impl GenderClassifier for LexiconClassifier {
    fn classify_gender(&self, text: &str) -> Result<GenderVerdict, BackendError> {
        if text.trim().is_empty() {
            return Err(BackendError::InvalidInput("cannot classify empty text".into()));
        }
        let (f, m) = self.counts(text);
        let p_female = if f + m == 0 { 0.5 } else { f as f64 / (f + m) as f64 };
        Ok(GenderVerdict { p_female })
    }
}

/// Every token has probability `1 / vocab_size`.
#[derive(Debug, Clone, Copy)]
pub struct UniformLm {
    pub vocab_size: usize,
}

impl LanguageModel for UniformLm {
    fn lm_logprob(&self, text: &str) -> Result<LmScore, BackendError> {
        let n_tokens = crate::corpus::tokenize(text).len();
        if n_tokens == 0 {
            return Err(BackendError::InvalidInput("cannot score empty text".into()));
        }
        Ok(LmScore {
            logprob: -(n_tokens as f64) * (self.vocab_size as f64).ln(),
            n_tokens,
        })
    }
}

/// Placeholder for a mock set configured without an LM.
#[derive(Debug, Clone, Copy)]
pub struct MissingLm;

impl LanguageModel for MissingLm {
    fn lm_logprob(&self, _text: &str) -> Result<LmScore, BackendError> {
        Err(BackendError::Unavailable(
            "no language model configured (set mock.lm_model or mock.lm_corpus)".into(),
        ))
    }
}
