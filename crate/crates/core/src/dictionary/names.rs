use std::cmp::Reverse;
use std::collections::{HashMap, HashSet};
use std::path::Path;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameEntry {
    pub name: String,
    pub female_count: u64,
    pub male_count: u64,
}

impl NameEntry {
    pub fn total(&self) -> u64 {
        self.female_count + self.male_count
    }
}

/// First-name frequency statistics by gender.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NameTable {
    entries: Vec<NameEntry>,
}

impl NameTable {
    pub fn new(entries: Vec<NameEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.name.to_lowercase()) {
                return Err(Error::Config(format!("name table: duplicate name {:?}", e.name)));
            }
            if e.total() == 0 {
                return Err(Error::Config(format!("name table: {:?} has zero counts", e.name)));
            }
        }
        Ok(NameTable { entries })
    }

    /// Parses `name,female_count,male_count` lines; a header line is allowed.
    pub fn parse(contents: &str, origin: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (idx, line) in contents.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if idx == 0 && fields.first() == Some(&"name") {
                continue;
            }
            let [name, f, m] = fields[..] else {
                return Err(Error::parse(origin, idx + 1, "expected name,female_count,male_count"));
            };
            let count = |s: &str| {
                s.parse::<u64>()
                    .map_err(|_| Error::parse(origin, idx + 1, format!("invalid count {s:?}")))
            };
            entries.push(NameEntry {
                name: name.to_string(),
                female_count: count(f)?,
                male_count: count(m)?,
            });
        }
        NameTable::new(entries)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        NameTable::parse(&contents, path)
    }

    pub fn entries(&self) -> &[NameEntry] {
        &self.entries
    }
}

/// A partial bijection between female and male first names.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NamePairing {
    pairs: Vec<(String, String)>,
    unmatched: Vec<String>,
    lookup: HashMap<String, String>,
}

impl NamePairing {
    /// Builds a pairing from explicit (female, male) pairs.
    pub fn from_pairs(pairs: Vec<(String, String)>, unmatched: Vec<String>) -> Result<Self> {
        let mut lookup = HashMap::new();
        for (f, m) in &pairs {
            for (a, b) in [(f, m), (m, f)] {
                if lookup.insert(a.to_lowercase(), b.clone()).is_some() {
                    return Err(Error::Config(format!("name {a:?} occurs in more than one pair")));
                }
            }
        }
        Ok(NamePairing {
            pairs,
            unmatched,
            lookup,
        })
    }

    pub fn empty() -> Self {
        NamePairing::default()
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn unmatched(&self) -> &[String] {
        &self.unmatched
    }

    /// Counterpart of a name, matched case-insensitively.
    pub fn counterpart(&self, lowercase_name: &str) -> Option<&str> {
        self.lookup.get(lowercase_name).map(String::as_str)
    }
}

/// Pairs gender-specific names by frequency rank.
///
/// A name is female-specific when `female / total >= threshold` (and female
/// outnumbers male), male-specific symmetrically. Each class is ranked by
/// total frequency, descending, ties broken by name; the i-th female name is
/// paired with the i-th male name. Non-specific names and the longer class's
/// tail end up unmatched.
pub fn build_name_pairs(table: &NameTable, specificity_threshold: f64) -> Result<NamePairing> {
    if !(0.5..=1.0).contains(&specificity_threshold) {
        return Err(Error::Config(format!(
            "specificity threshold {specificity_threshold} outside [0.5, 1]"
        )));
    }
    let mut female = Vec::new();
    let mut male = Vec::new();
    let mut unmatched = Vec::new();
    for e in table.entries() {
        let total = e.total() as f64;
        if e.female_count > e.male_count && e.female_count as f64 / total >= specificity_threshold {
            female.push(e);
        } else if e.male_count > e.female_count && e.male_count as f64 / total >= specificity_threshold {
            male.push(e);
        } else {
            unmatched.push(e.name.clone());
        }
    }
    for class in [&mut female, &mut male] {
        class.sort_by_key(|e| (Reverse(e.total()), e.name.clone()));
    }
    let n = female.len().min(male.len());
    let pairs = female
        .iter()
        .zip(&male)
        .map(|(f, m)| (f.name.clone(), m.name.clone()))
        .collect();
    unmatched.extend(female[n..].iter().chain(&male[n..]).map(|e| e.name.clone()));
    NamePairing::from_pairs(pairs, unmatched)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(name: &str, f: u64, m: u64) -> NameEntry {
        NameEntry {
            name: name.into(),
            female_count: f,
            male_count: m,
        }
    }

    #[test]
    fn single_obvious_match() {
        let t = NameTable::new(vec![entry("Mary", 100, 0), entry("John", 0, 100)]).unwrap();
        let p = build_name_pairs(&t, 0.8).unwrap();
        assert_eq!(p.pairs(), [("Mary".to_string(), "John".to_string())]);
        assert_eq!(p.counterpart("john"), Some("Mary"));
    }

    #[test]
    fn ambiguous_name_is_unmatched() {
        let t = NameTable::new(vec![entry("Taylor", 50, 50)]).unwrap();
        let p = build_name_pairs(&t, 0.8).unwrap();
        assert!(p.pairs().is_empty());
        assert_eq!(p.unmatched(), ["Taylor"]);
    }

    #[test]
    fn pairs_by_rank() {
        // female ranks: Ann(90) > Beth(60) > Cora(30); male ranks: Dan(80) > Eli(20)
        let t = NameTable::new(vec![
            entry("Cora", 30, 0),
            entry("Eli", 1, 19),
            entry("Ann", 88, 2),
            entry("Dan", 0, 80),
            entry("Beth", 60, 0),
        ])
        .unwrap();
        let p = build_name_pairs(&t, 0.8).unwrap();
        assert_eq!(
            p.pairs(),
            [
                ("Ann".to_string(), "Dan".to_string()),
                ("Beth".to_string(), "Eli".to_string())
            ]
        );
        assert_eq!(p.unmatched(), ["Cora"]);
    }

    #[test]
    fn table_invariants() {
        assert!(NameTable::new(vec![entry("Ann", 1, 0), entry("ann", 2, 0)]).is_err());
        assert!(NameTable::new(vec![entry("Ann", 0, 0)]).is_err());
        assert!(build_name_pairs(&NameTable::default(), 0.3).is_err());
    }

    #[test]
    fn parses_csv_with_header() {
        let t = NameTable::parse("name,female_count,male_count\nMary,10,0\nJohn,0,12\n", Path::new("x")).unwrap();
        assert_eq!(t.entries().len(), 2);
        assert!(NameTable::parse("Mary,ten,0\n", Path::new("x")).is_err());
    }
}
