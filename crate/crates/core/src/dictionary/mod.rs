//! Dictionary-based counterfactual generation.
//!
//! Tokens are swapped word-for-word through a [`GenderDictionary`] and a
//! [`NamePairing`]. The substitution is deliberately context-free: it
//! reproduces the known failure modes of dictionary CDA (out-of-context
//! swaps, words missing from the dictionary), which the [`crate::pipeline`]
//! then repairs.

mod casing;
mod names;

use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{tokenize, BuiltinList, Corpus, TextRecord, WordList};
use crate::{Error, Result};

pub use casing::{apply_casing, casing_of, Casing};
pub use names::{build_name_pairs, NameEntry, NamePairing, NameTable};

/// Suffix appended to the id of a counterfactual record.
pub const COUNTERFACTUAL_SUFFIX: &str = "-cf";

/// Word pairs `(female_form, male_form)`, usable in both directions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenderDictionary {
    pairs: Vec<(String, String)>,
    lookup: HashMap<String, String>,
    symmetric: bool,
}

impl GenderDictionary {
    pub fn new(pairs: Vec<(String, String)>) -> Result<Self> {
        let mut female_side = HashMap::new();
        let mut male_side = HashMap::new();
        for (f, m) in &pairs {
            if female_side.insert(f.as_str(), m.as_str()).is_some() {
                return Err(Error::DuplicateDictionaryWord {
                    word: f.clone(),
                    detail: "twice in the female column",
                });
            }
            if male_side.insert(m.as_str(), f.as_str()).is_some() {
                return Err(Error::DuplicateDictionaryWord {
                    word: m.clone(),
                    detail: "twice in the male column",
                });
            }
        }
        if let Some(w) = pairs
            .iter()
            .map(|(f, _)| f)
            .find(|f| male_side.contains_key(f.as_str()))
        {
            return Err(Error::DuplicateDictionaryWord {
                word: w.clone(),
                detail: "in both columns",
            });
        }
        let lookup: HashMap<String, String> = female_side
            .iter()
            .chain(male_side.iter())
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let symmetric = lookup.iter().all(|(w, c)| lookup.get(c).is_some_and(|back| back == w));
        Ok(GenderDictionary {
            pairs,
            lookup,
            symmetric,
        })
    }

    /// Parses `female_form<TAB>male_form` lines. Blank lines and `#` comments are skipped.
    pub fn parse(contents: &str, origin: &Path) -> Result<Self> {
        let mut pairs = Vec::new();
        for (idx, line) in contents.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((f, m)) = line.split_once('\t') else {
                return Err(Error::parse(origin, idx + 1, "expected two tab-separated columns"));
            };
            let (f, m) = (f.trim(), m.trim());
            if f.is_empty() || m.is_empty() || m.contains('\t') {
                return Err(Error::parse(origin, idx + 1, "expected two tab-separated columns"));
            }
            if f.chars().any(char::is_uppercase) || m.chars().any(char::is_uppercase) {
                return Err(Error::parse(origin, idx + 1, "dictionary entries must be lowercase"));
            }
            pairs.push((f.to_string(), m.to_string()));
        }
        GenderDictionary::new(pairs)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        GenderDictionary::parse(&contents, path)
    }

    /// The word-pair subset shipped with the crate.
    pub fn builtin() -> GenderDictionary {
        GenderDictionary::parse(
            include_str!("../../data/gender_pairs.tsv"),
            Path::new("gender_pairs.tsv"),
        )
        .expect("shipped dictionary is valid")
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn lookup(&self, lowercase_word: &str) -> Option<&str> {
        self.lookup.get(lowercase_word).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    Dictionary,
    Name,
    Possessive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Replacement {
    /// Token index in the source text.
    pub position: usize,
    pub original: String,
    pub replacement: String,
    pub rule: Rule,
}

/// Audit trail of one [`augment_text`] call.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SubstitutionReport {
    pub replaced: Vec<Replacement>,
    /// Gendered words (shipped attribute lists) that no rule rewrote.
    pub untouched_gender_terms: usize,
}

fn gender_lexicon() -> &'static (WordList, WordList) {
    static LISTS: OnceLock<(WordList, WordList)> = OnceLock::new();
    LISTS.get_or_init(|| {
        (
            WordList::builtin(BuiltinList::FemaleAttributes),
            WordList::builtin(BuiltinList::MaleAttributes),
        )
    })
}

fn strip_possessive(word: &str) -> Option<(&str, &str)> {
    ["'s", "\u{2019}s", "'S", "\u{2019}S"]
        .iter()
        .find_map(|suffix| word.strip_suffix(suffix).map(|stem| (stem, &word[stem.len()..])))
        .filter(|(stem, _)| !stem.is_empty())
}

fn counterpart<'a>(dict: &'a GenderDictionary, names: &'a NamePairing, lower: &str) -> Option<(&'a str, Rule)> {
    dict.lookup(lower)
        .map(|c| (c, Rule::Dictionary))
        .or_else(|| names.counterpart(lower).map(|c| (c, Rule::Name)))
}

/// Swaps every dictionary word and paired name in `record`, flipping its gender label.
///
/// Matching is case-insensitive; the source token's casing is re-applied to
/// the replacement and a trailing possessive `'s` is carried over.
pub fn augment_text(
    record: &TextRecord,
    dict: &GenderDictionary,
    names: &NamePairing,
) -> (TextRecord, SubstitutionReport) {
    let seq = tokenize(&record.text);
    let (female, male) = gender_lexicon();
    let mut report = SubstitutionReport::default();
    let mut edits = Vec::new();
    for (i, tok) in seq.tokens().iter().enumerate() {
        if !tok.is_word() {
            continue;
        }
        let lower = tok.surface.to_lowercase();
        let swapped = if let Some((c, rule)) = counterpart(dict, names, &lower) {
            Some((apply_casing(&tok.surface, c), rule))
        } else if let Some((stem, suffix)) = strip_possessive(&tok.surface) {
            counterpart(dict, names, &stem.to_lowercase())
                .map(|(c, _)| (format!("{}{}", apply_casing(stem, c), suffix), Rule::Possessive))
        } else {
            None
        };
        match swapped {
            Some((replacement, rule)) => {
                report.replaced.push(Replacement {
                    position: i,
                    original: tok.surface.clone(),
                    replacement: replacement.clone(),
                    rule,
                });
                edits.push((i..i + 1, replacement));
            }
            None => {
                if female.contains(&lower) || male.contains(&lower) {
                    report.untouched_gender_terms += 1;
                }
            }
        }
    }
    let out = TextRecord {
        id: record.id.clone(),
        text: seq.splice(&edits),
        gender: record.gender.map(|g| g.flip()),
        label: record.label.clone(),
    };
    (out, report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubstitutionMode {
    /// Keep every record and append its counterfactual.
    CdaAugment,
    /// Replace a seeded sample of records by their counterfactuals.
    CdsSubstitute,
}

/// Corpus-level totals over the per-record [`SubstitutionReport`]s.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SubstitutionSummary {
    pub records_in: usize,
    pub records_out: usize,
    pub counterfactuals: usize,
    pub dictionary_replacements: usize,
    pub name_replacements: usize,
    pub possessive_replacements: usize,
    pub untouched_gender_terms: usize,
}

impl SubstitutionSummary {
    fn add(&mut self, report: &SubstitutionReport) {
        self.counterfactuals += 1;
        for r in &report.replaced {
            match r.rule {
                Rule::Dictionary => self.dictionary_replacements += 1,
                Rule::Name => self.name_replacements += 1,
                Rule::Possessive => self.possessive_replacements += 1,
            }
        }
        self.untouched_gender_terms += report.untouched_gender_terms;
    }
}

fn counterfactual(
    record: &TextRecord,
    dict: &GenderDictionary,
    names: &NamePairing,
) -> (TextRecord, SubstitutionReport) {
    let (mut cf, report) = augment_text(record, dict, names);
    cf.id.push_str(COUNTERFACTUAL_SUFFIX);
    (cf, report)
}

/// Applies CDA (augment: size doubles) or CDS (substitute a seeded
/// `substitute_fraction` of records in place) to a corpus.
pub fn substitute_corpus(
    corpus: &Corpus,
    dict: &GenderDictionary,
    names: &NamePairing,
    mode: SubstitutionMode,
    substitute_fraction: f64,
    seed: u64,
) -> Result<(Corpus, SubstitutionSummary)> {
    let mut summary = SubstitutionSummary {
        records_in: corpus.len(),
        ..Default::default()
    };
    let records = match mode {
        SubstitutionMode::CdaAugment => {
            let cfs: Vec<_> = corpus
                .records
                .par_iter()
                .map(|r| counterfactual(r, dict, names))
                .collect();
            let mut out = Vec::with_capacity(corpus.len() * 2);
            for (orig, (cf, report)) in corpus.records.iter().zip(cfs) {
                summary.add(&report);
                out.push(orig.clone());
                out.push(cf);
            }
            out
        }
        SubstitutionMode::CdsSubstitute => {
            if !(0.0..=1.0).contains(&substitute_fraction) {
                return Err(Error::Config(format!(
                    "substitute fraction {substitute_fraction} outside [0, 1]"
                )));
            }
            let n = corpus.len();
            let k = (substitute_fraction * n as f64).round() as usize;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut chosen = vec![false; n];
            for i in rand::seq::index::sample(&mut rng, n, k.min(n)) {
                chosen[i] = true;
            }
            let mut out = Vec::with_capacity(n);
            for (r, pick) in corpus.records.iter().zip(chosen) {
                if pick {
                    let (cf, report) = counterfactual(r, dict, names);
                    summary.add(&report);
                    out.push(cf);
                } else {
                    out.push(r.clone());
                }
            }
            out
        }
    };
    summary.records_out = records.len();
    let provenance = match mode {
        SubstitutionMode::CdaAugment => "cda_augment",
        SubstitutionMode::CdsSubstitute => "cds_substitute",
    };
    Ok((Corpus::new(records, provenance), summary))
}
