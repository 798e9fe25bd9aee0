//! Parallel-data generation: dictionary seed, erratic-token masking,
//! infilling correction and classifier filtration.
//!
//! Masking and infilling only touch the generated target text; the source is
//! the original human-written record.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::{BackendError, BackendSet, GenderClassifier, Infiller, TokenScorer, MASK_TOKEN};
use crate::corpus::{tokenize, write_jsonl, Corpus, Gender, TextRecord, TokenSequence};
use crate::dictionary::{augment_text, GenderDictionary, NamePairing};
use crate::{Error, Result};

pub const STAGE_SEED: &str = "seed";
pub const STAGE_MASK: &str = "mask";
pub const STAGE_INFILL: &str = "infill";
pub const STAGE_FILTER: &str = "filter";

/// A token sequence with some word ranges replaced by one mask token each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSequence {
    tokens: TokenSequence,
    slots: Vec<Range<usize>>,
}

impl MaskedSequence {
    /// `slots` must be non-empty ranges, sorted, disjoint and in bounds.
    pub fn new(tokens: TokenSequence, slots: Vec<Range<usize>>) -> Result<Self> {
        let mut prev_end = 0;
        for s in &slots {
            if s.start >= s.end || s.end > tokens.len() {
                return Err(Error::MaskSlots(format!(
                    "{s:?} out of bounds for {} tokens",
                    tokens.len()
                )));
            }
            if s.start < prev_end {
                return Err(Error::MaskSlots(format!(
                    "{s:?} overlaps or precedes the previous slot"
                )));
            }
            prev_end = s.end;
        }
        Ok(MaskedSequence { tokens, slots })
    }

    pub fn unmasked(tokens: TokenSequence) -> Self {
        MaskedSequence {
            tokens,
            slots: Vec::new(),
        }
    }

    pub fn tokens(&self) -> &TokenSequence {
        &self.tokens
    }

    pub fn slots(&self) -> &[Range<usize>] {
        &self.slots
    }

    /// The text with every slot replaced by `<mask>`.
    pub fn render(&self) -> String {
        self.fill_with(|_| MASK_TOKEN.to_string())
    }

    /// Lowercased tokens with each slot collapsed to a single `<mask>`,
    /// plus the position of every slot in that view.
    pub fn context_view(&self) -> (Vec<String>, Vec<usize>) {
        let mut view = Vec::new();
        let mut positions = Vec::new();
        let mut slots = self.slots.iter().peekable();
        let mut i = 0;
        while i < self.tokens.len() {
            match slots.peek() {
                Some(s) if s.start == i => {
                    positions.push(view.len());
                    view.push(MASK_TOKEN.to_string());
                    i = s.end;
                    slots.next();
                }
                _ => {
                    view.push(self.tokens.tokens()[i].surface.to_lowercase());
                    i += 1;
                }
            }
        }
        (view, positions)
    }

    fn fill_with(&self, mut fill: impl FnMut(usize) -> String) -> String {
        let edits: Vec<(Range<usize>, String)> = self
            .slots
            .iter()
            .enumerate()
            .map(|(k, s)| (s.clone(), fill(k)))
            .collect();
        self.tokens.splice(&edits)
    }
}

/// A source record and its counterfactual target.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelPair {
    pub source: TextRecord,
    pub target: TextRecord,
    pub trace: Vec<String>,
    /// Mask slots opened on the target.
    pub masks: usize,
    /// Classifier probability of the source gender on the target text.
    pub source_gender_prob: Option<f64>,
}

/// One line of the parallel-data output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub id: String,
    pub source_text: String,
    pub target_text: String,
    pub source_gender: Gender,
    pub trace: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_gender_prob: Option<f64>,
}

impl ParallelPair {
    pub fn source_gender(&self) -> Gender {
        self.source.gender.expect("seed pairs always carry a source gender")
    }

    pub fn to_row(&self) -> PairRow {
        PairRow {
            id: self.source.id.clone(),
            source_text: self.source.text.clone(),
            target_text: self.target.text.clone(),
            source_gender: self.source_gender(),
            trace: self.trace.clone(),
            source_gender_prob: self.source_gender_prob,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageToggles {
    pub mask_and_infill: bool,
    pub filtration: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        StageToggles {
            mask_and_infill: true,
            filtration: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Tokens scoring strictly below this logit are masked.
    pub theta: f64,
    /// Pairs are kept when the target's probability of the source gender is
    /// strictly below this value.
    pub filtration_cutoff: f64,
    pub stages: StageToggles,
    /// Recorded for reproducibility; the shipped mock backends are
    /// deterministic and do not consume it.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            theta: 0.0,
            filtration_cutoff: 0.5,
            stages: StageToggles::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.theta.is_finite() {
            return Err(Error::Config("theta must be finite".into()));
        }
        if !(self.filtration_cutoff > 0.0 && self.filtration_cutoff < 1.0) {
            return Err(Error::Config(format!(
                "filtration_cutoff must lie strictly between 0 and 1, got {}",
                self.filtration_cutoff
            )));
        }
        Ok(())
    }
}

/// The six ablation variants: {full pipeline, no filtration, raw dictionary
/// output} crossed with {discriminator, no discriminator}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationPreset {
    Mbcda1,
    Mbcda2,
    Mbcda3,
    Mbcda4,
    Mbcda5,
    Mbcda6,
}

impl AblationPreset {
    pub const ALL: [AblationPreset; 6] = [
        AblationPreset::Mbcda1,
        AblationPreset::Mbcda2,
        AblationPreset::Mbcda3,
        AblationPreset::Mbcda4,
        AblationPreset::Mbcda5,
        AblationPreset::Mbcda6,
    ];

    pub fn stages(self) -> StageToggles {
        use AblationPreset::*;
        match self {
            Mbcda1 | Mbcda2 => StageToggles {
                mask_and_infill: true,
                filtration: true,
            },
            Mbcda3 | Mbcda4 => StageToggles {
                mask_and_infill: true,
                filtration: false,
            },
            Mbcda5 | Mbcda6 => StageToggles {
                mask_and_infill: false,
                filtration: false,
            },
        }
    }

    pub fn uses_discriminator(self) -> bool {
        use AblationPreset::*;
        matches!(self, Mbcda1 | Mbcda3 | Mbcda5)
    }

    pub fn name(self) -> &'static str {
        use AblationPreset::*;
        match self {
            Mbcda1 => "mbcda1",
            Mbcda2 => "mbcda2",
            Mbcda3 => "mbcda3",
            Mbcda4 => "mbcda4",
            Mbcda5 => "mbcda5",
            Mbcda6 => "mbcda6",
        }
    }
}

impl std::str::FromStr for AblationPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationPreset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown ablation preset {s:?} (expected mbcda1..mbcda6)")))
    }
}

fn stage_err(stage: &'static str, record_id: &str, source: impl Into<Error>) -> Error {
    Error::Stage {
        stage,
        record_id: record_id.to_string(),
        source: Box::new(source.into()),
    }
}

/// One pair per record: the dictionary counterfactual of each source.
pub fn generate_seed(corpus: &Corpus, dict: &GenderDictionary, names: &NamePairing) -> Result<Vec<ParallelPair>> {
    corpus
        .records
        .par_iter()
        .map(|record| {
            if record.gender.is_none() {
                return Err(stage_err(
                    STAGE_SEED,
                    &record.id,
                    Error::Config("record has no gender label".into()),
                ));
            }
            let (target, _) = augment_text(record, dict, names);
            Ok(ParallelPair {
                source: record.clone(),
                target,
                trace: vec![STAGE_SEED.to_string()],
                masks: 0,
                source_gender_prob: None,
            })
        })
        .collect()
}

/// Masks every token whose score is strictly below `theta`; each flagged
/// word gets its own slot.
pub fn mask_erratic(text: &TokenSequence, scorer: &dyn TokenScorer, theta: f64) -> Result<MaskedSequence> {
    if text.is_empty() {
        return Ok(MaskedSequence::unmasked(text.clone()));
    }
    let scores = scorer.score_tokens(text)?;
    if scores.len() != text.len() {
        return Err(BackendError::Protocol {
            endpoint: "scorer".into(),
            message: format!("expected {} scores, got {}", text.len(), scores.len()),
        }
        .into());
    }
    let slots = scores
        .iter()
        .filter(|s| s.score < theta)
        .map(|s| s.word_index..s.word_index + 1)
        .collect();
    MaskedSequence::new(text.clone(), slots)
}

/// Replaces each slot with the infiller's words joined by single spaces.
/// Without slots the original text comes back and the infiller is not called.
pub fn correct_text(masked: &MaskedSequence, infiller: &dyn Infiller) -> Result<String> {
    if masked.slots().is_empty() {
        return Ok(masked.tokens().original().to_string());
    }
    let fills = infiller.infill(masked)?;
    if fills.len() != masked.slots().len() {
        return Err(BackendError::Protocol {
            endpoint: "infiller".into(),
            message: format!("expected {} fills, got {}", masked.slots().len(), fills.len()),
        }
        .into());
    }
    let fills: Vec<String> = fills.iter().map(|f| f.join(" ")).collect();
    let tokens = masked.tokens();
    let slots = masked.slots();
    // Keep a fill from fusing with a neighbouring word when the slot had no
    // whitespace around it (e.g. a masked punctuation mark).
    let neighbour = |i: usize| -> &str {
        match slots.iter().position(|s| s.contains(&i)) {
            Some(k) => &fills[k],
            None => &tokens.tokens()[i].surface,
        }
    };
    let alnum_end = |s: &str| s.chars().last().is_some_and(char::is_alphanumeric);
    let alnum_start = |s: &str| s.chars().next().is_some_and(char::is_alphanumeric);
    Ok(masked.fill_with(|k| {
        let slot = &slots[k];
        let mut fill = fills[k].clone();
        if slot.start > 0
            && tokens.gap_before(slot.start).is_empty()
            && alnum_end(neighbour(slot.start - 1))
            && alnum_start(&fill)
        {
            fill.insert(0, ' ');
        }
        if slot.end < tokens.len()
            && tokens.gap_before(slot.end).is_empty()
            && alnum_start(neighbour(slot.end))
            && alnum_end(&fill)
        {
            fill.push(' ');
        }
        fill
    }))
}

/// Splits pairs into those whose target no longer reads as the source
/// gender (kept) and the rest (dropped), preserving order.
pub fn filter_pairs(
    pairs: Vec<ParallelPair>,
    classifier: &dyn GenderClassifier,
    cutoff: f64,
) -> Result<(Vec<ParallelPair>, Vec<ParallelPair>)> {
    let judged: Vec<(ParallelPair, bool)> = pairs
        .into_par_iter()
        .map(|mut pair| {
            let gender = pair.source.gender.ok_or_else(|| {
                stage_err(
                    STAGE_FILTER,
                    &pair.source.id,
                    Error::Config("record has no gender label".into()),
                )
            })?;
            let verdict = classifier
                .classify_gender(&pair.target.text)
                .map_err(|e| stage_err(STAGE_FILTER, &pair.source.id, e))?;
            let p = gender.probability(verdict.p_female);
            pair.source_gender_prob = Some(p);
            pair.trace.push(STAGE_FILTER.to_string());
            Ok((pair, p < cutoff))
        })
        .collect::<Result<_>>()?;
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (pair, keep) in judged {
        if keep {
            kept.push(pair);
        } else {
            dropped.push(pair);
        }
    }
    Ok((kept, dropped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCount {
    pub stage: String,
    pub records_in: usize,
    pub records_out: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub stages: Vec<StageCount>,
    /// Number of targets with a given number of mask slots.
    pub mask_histogram: BTreeMap<usize, usize>,
    pub kept: usize,
    pub dropped: usize,
    pub drop_rate: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub kept: Vec<ParallelPair>,
    pub dropped: Vec<ParallelPair>,
    pub report: PipelineReport,
}

impl PipelineOutput {
    /// Writes `parallel.jsonl`, `dropped.jsonl` and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let rows = |pairs: &[ParallelPair]| pairs.iter().map(ParallelPair::to_row).collect::<Vec<_>>();
        write_jsonl(&dir.join("parallel.jsonl"), &rows(&self.kept))?;
        write_jsonl(&dir.join("dropped.jsonl"), &rows(&self.dropped))?;
        let report_path = dir.join("report.json");
        let json = serde_json::to_string_pretty(&self.report).expect("report serializes");
        std::fs::write(&report_path, json + "\n").map_err(|e| Error::io(&report_path, e))
    }
}

pub fn run_pipeline(
    corpus: &Corpus,
    dict: &GenderDictionary,
    names: &NamePairing,
    backends: &BackendSet,
    config: &PipelineConfig,
) -> Result<PipelineOutput> {
    config.validate()?;
    let mut stages = Vec::new();
    let mut pairs = generate_seed(corpus, dict, names)?;
    stages.push(StageCount {
        stage: STAGE_SEED.into(),
        records_in: corpus.len(),
        records_out: pairs.len(),
    });
    log::info!("seed: {} pairs", pairs.len());

    let mut mask_histogram = BTreeMap::new();
    if config.stages.mask_and_infill {
        let n = pairs.len();
        pairs = pairs
            .into_par_iter()
            .map(|mut pair| {
                let tokens = tokenize(&pair.target.text);
                let masked = mask_erratic(&tokens, backends.scorer.as_ref(), config.theta)
                    .map_err(|e| stage_err(STAGE_MASK, &pair.source.id, e))?;
                pair.masks = masked.slots().len();
                pair.trace.push(STAGE_MASK.to_string());
                pair.target.text = correct_text(&masked, backends.infiller.as_ref())
                    .map_err(|e| stage_err(STAGE_INFILL, &pair.source.id, e))?;
                pair.trace.push(STAGE_INFILL.to_string());
                Ok(pair)
            })
            .collect::<Result<_>>()?;
        for pair in &pairs {
            *mask_histogram.entry(pair.masks).or_insert(0) += 1;
        }
        stages.push(StageCount {
            stage: format!("{STAGE_MASK}+{STAGE_INFILL}"),
            records_in: n,
            records_out: pairs.len(),
        });
        log::info!(
            "mask+infill: {} slots opened",
            pairs.iter().map(|p| p.masks).sum::<usize>()
        );
    }

    let (kept, dropped) = if config.stages.filtration {
        let n = pairs.len();
        let (kept, dropped) = filter_pairs(pairs, backends.classifier.as_ref(), config.filtration_cutoff)?;
        stages.push(StageCount {
            stage: STAGE_FILTER.into(),
            records_in: n,
            records_out: kept.len(),
        });
        log::info!("filter: kept {}, dropped {}", kept.len(), dropped.len());
        (kept, dropped)
    } else {
        (pairs, Vec::new())
    };

    let total = kept.len() + dropped.len();
    let report = PipelineReport {
        stages,
        mask_histogram,
        kept: kept.len(),
        dropped: dropped.len(),
        drop_rate: if total == 0 {
            0.0
        } else {
            dropped.len() as f64 / total as f64
        },
    };
    Ok(PipelineOutput { kept, dropped, report })
}
