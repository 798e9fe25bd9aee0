//! Records, corpora and their on-disk formats.
//!
//! JSONL is the canonical interchange format:
//! `{"id": str, "text": str, "gender": "male"|"female", "label": str}` with
//! `gender` and `label` optional. TSV (`id<TAB>gender<TAB>label<TAB>text`) is
//! accepted on input only.

mod tokenize;
mod wordlist;

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{Error, Result};

pub use tokenize::{tokenize, Token, TokenKind, TokenSequence};
pub use wordlist::{BuiltinList, WordList};

/// Binary gender label, encoded 0 = male, 1 = female.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn flip(self) -> Gender {
        match self {
            Gender::Male => Gender::Female,
            Gender::Female => Gender::Male,
        }
    }

    pub fn as_label(self) -> u8 {
        match self {
            Gender::Male => 0,
            Gender::Female => 1,
        }
    }

    pub fn from_label(label: u8) -> Option<Gender> {
        match label {
            0 => Some(Gender::Male),
            1 => Some(Gender::Female),
            _ => None,
        }
    }

    /// Probability of this gender given `p_female`.
    pub fn probability(self, p_female: f64) -> f64 {
        match self {
            Gender::Female => p_female,
            Gender::Male => 1.0 - p_female,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Male => "male",
            Gender::Female => "female",
        })
    }
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" | "0" => Ok(Gender::Male),
            "female" | "f" | "1" => Ok(Gender::Female),
            other => Err(format!("invalid gender label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TextRecord {
    pub id: String,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gender: Option<Gender>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl TextRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        TextRecord {
            id: id.into(),
            text: text.into(),
            gender: None,
            label: None,
        }
    }

    pub fn with_gender(mut self, gender: Gender) -> Self {
        self.gender = Some(gender);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub records: Vec<TextRecord>,
    pub provenance: String,
}

impl Corpus {
    pub fn new(records: Vec<TextRecord>, provenance: impl Into<String>) -> Self {
        Corpus {
            records,
            provenance: provenance.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.id.as_str())
    }

    /// Applies `f` to every record, keeping order. `stage` becomes the new provenance.
    pub fn map(&self, stage: &str, f: impl Fn(&TextRecord) -> TextRecord) -> Corpus {
        Corpus {
            records: self.records.iter().map(f).collect(),
            provenance: stage.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Tsv,
}

impl CorpusFormat {
    /// Guesses the format from the file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> CorpusFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") => CorpusFormat::Tsv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    text: String,
    #[serde(default)]
    gender: Option<Value>,
    #[serde(default)]
    label: Option<String>,
}

fn parse_gender(value: &Value) -> std::result::Result<Option<Gender>, String> {
    match value {
        Value::Null => Ok(None),
        Value::String(s) => s.parse().map(Some),
        Value::Number(n) => match n
            .as_u64()
            .and_then(|n| u8::try_from(n).ok())
            .and_then(Gender::from_label)
        {
            Some(g) => Ok(Some(g)),
            None => Err(format!("invalid gender label {n}")),
        },
        other => Err(format!("invalid gender label {other}")),
    }
}

/// Loads a corpus. Blank lines are skipped; every other line yields one record.
pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = match format {
            CorpusFormat::Jsonl => parse_jsonl_line(&line),
            CorpusFormat::Tsv => parse_tsv_line(&line),
        }
        .map_err(|msg| Error::parse(path, line_no, msg))?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId {
                id: record.id,
                line: line_no,
            });
        }
        records.push(record);
    }
    Ok(Corpus::new(records, path.display().to_string()))
}

fn parse_jsonl_line(line: &str) -> std::result::Result<TextRecord, String> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let gender = match &raw.gender {
        Some(v) => parse_gender(v)?,
        None => None,
    };
    Ok(TextRecord {
        id: raw.id,
        text: raw.text,
        gender,
        label: raw.label,
    })
}

fn parse_tsv_line(line: &str) -> std::result::Result<TextRecord, String> {
    let mut fields = line.splitn(4, '\t');
    let (Some(id), Some(gender), Some(label), Some(text)) =
        (fields.next(), fields.next(), fields.next(), fields.next())
    else {
        return Err("expected 4 tab-separated fields: id, gender, label, text".into());
    };
    let gender = if gender.trim().is_empty() {
        None
    } else {
        Some(gender.parse()?)
    };
    let label = (!label.is_empty()).then(|| label.to_string());
    Ok(TextRecord {
        id: id.to_string(),
        text: text.to_string(),
        gender,
        label,
    })
}

/// Writes a corpus. Only JSONL output is supported.
pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>, format: CorpusFormat) -> Result<()> {
    let path = path.as_ref();
    if format != CorpusFormat::Jsonl {
        return Err(Error::Unsupported("TSV corpora are read-only; write JSONL".into()));
    }
    write_jsonl(path, &corpus.records)
}

/// Writes any serializable items as JSON lines.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).expect("records serialize");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_single_record_with_string_gender() {
        let f = write_tmp(r#"{"id":"1","text":"She is a nurse.","gender":"female"}"#);
        let c = load_corpus(f.path(), CorpusFormat::Jsonl).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.records[0].gender, Some(Gender::Female));
        assert_eq!(c.records[0].gender.unwrap().as_label(), 1);
        assert_eq!(c.provenance, f.path().display().to_string());
    }

    #[test]
    fn numeric_gender_labels_are_normalized() {
        let f = write_tmp("{\"id\":\"a\",\"text\":\"x\",\"gender\":0}\n{\"id\":\"b\",\"text\":\"y\",\"gender\":1}\n");
        let c = load_corpus(f.path(), CorpusFormat::Jsonl).unwrap();
        assert_eq!(c.records[0].gender, Some(Gender::Male));
        assert_eq!(c.records[1].gender, Some(Gender::Female));
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let f = write_tmp("");
        assert!(load_corpus(f.path(), CorpusFormat::Jsonl).unwrap().is_empty());
    }

    #[test]
    fn malformed_line_names_line_number() {
        let f = write_tmp("{\"id\":\"1\",\"text\":\"a\"}\n{\"id\":\"2\",\"text\":\n{\"id\":\"3\",\"text\":\"c\"}\n");
        let err = load_corpus(f.path(), CorpusFormat::Jsonl).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn bad_gender_label_is_an_error() {
        let f = write_tmp("{\"id\":\"1\",\"text\":\"a\",\"gender\":\"other\"}\n");
        let err = load_corpus(f.path(), CorpusFormat::Jsonl).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn duplicate_id_is_an_error() {
        let f = write_tmp("{\"id\":\"1\",\"text\":\"a\"}\n{\"id\":\"1\",\"text\":\"b\"}\n");
        assert!(matches!(
            load_corpus(f.path(), CorpusFormat::Jsonl),
            Err(Error::DuplicateId { line: 2, .. })
        ));
    }

    #[test]
    fn tsv_is_read_only() {
        let f = write_tmp("7\tmale\tsurgeon\tHe operates.\tstill text\n8\t\t\tNo labels\n");
        let c = load_corpus(f.path(), CorpusFormat::Tsv).unwrap();
        assert_eq!(c.records[0].text, "He operates.\tstill text");
        assert_eq!(c.records[0].label.as_deref(), Some("surgeon"));
        assert_eq!(c.records[1].gender, None);
        assert_eq!(c.records[1].label, None);
        let out = tempfile::NamedTempFile::new().unwrap();
        assert!(save_corpus(&c, out.path(), CorpusFormat::Tsv).is_err());
    }

    #[test]
    fn absent_label_is_omitted_on_save() {
        let c = Corpus::new(
            vec![TextRecord::new("1", "She is a nurse 👩‍⚕️ — café").with_gender(Gender::Female)],
            "test",
        );
        let out = tempfile::NamedTempFile::new().unwrap();
        save_corpus(&c, out.path(), CorpusFormat::Jsonl).unwrap();
        let raw = std::fs::read_to_string(out.path()).unwrap();
        assert!(!raw.contains("label"));
        let back = load_corpus(out.path(), CorpusFormat::Jsonl).unwrap();
        assert_eq!(back.records, c.records);
    }

    #[test]
    fn hundred_record_round_trip() {
        let records: Vec<_> = (0..100)
            .map(|i| {
                let r = TextRecord::new(format!("r{i}"), format!("text \"{i}\"\twith\ttabs\n"));
                match i % 3 {
                    0 => r.with_gender(Gender::Male).with_label("chef"),
                    1 => r.with_gender(Gender::Female),
                    _ => r,
                }
            })
            .collect();
        let c = Corpus::new(records, "gen");
        let out = tempfile::NamedTempFile::new().unwrap();
        save_corpus(&c, out.path(), CorpusFormat::Jsonl).unwrap();
        let back = load_corpus(out.path(), CorpusFormat::Jsonl).unwrap();
        assert_eq!(back.records, c.records);
    }

    #[test]
    fn map_preserves_order() {
        let c = Corpus::new((0..5).map(|i| TextRecord::new(i.to_string(), "x")).collect(), "a");
        let m = c.map("upper", |r| TextRecord {
            text: r.text.to_uppercase(),
            ..r.clone()
        });
        assert!(m.ids().eq(c.ids()));
        assert_eq!(m.provenance, "upper");
    }
}
