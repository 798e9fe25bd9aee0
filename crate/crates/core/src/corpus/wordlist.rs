use std::collections::HashSet;
use std::path::Path;

use crate::{Error, Result};

/// An ordered set of lowercase words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordList {
    name: String,
    words: Vec<String>,
    index: HashSet<String>,
}

/// Word lists shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinList {
    FemaleAttributes,
    MaleAttributes,
    FemaleCareers,
    MaleCareers,
    Pleasant,
    Unpleasant,
}

impl BuiltinList {
    fn source(self) -> (&'static str, &'static str) {
        match self {
            BuiltinList::FemaleAttributes => ("female_attributes", include_str!("../../data/female_attributes.txt")),
            BuiltinList::MaleAttributes => ("male_attributes", include_str!("../../data/male_attributes.txt")),
            BuiltinList::FemaleCareers => ("female_careers", include_str!("../../data/female_careers.txt")),
            BuiltinList::MaleCareers => ("male_careers", include_str!("../../data/male_careers.txt")),
            BuiltinList::Pleasant => ("pleasant", include_str!("../../data/pleasant.txt")),
            BuiltinList::Unpleasant => ("unpleasant", include_str!("../../data/unpleasant.txt")),
        }
    }
}

impl WordList {
    pub fn new(name: impl Into<String>, words: impl IntoIterator<Item = impl Into<String>>) -> Result<Self> {
        let name = name.into();
        let mut list = Vec::new();
        let mut index = HashSet::new();
        for w in words {
            let w: String = w.into();
            if w.is_empty() || w.chars().any(char::is_uppercase) {
                return Err(Error::WordList {
                    name,
                    message: format!("entry {w:?} is not a lowercase word"),
                });
            }
            if !index.insert(w.clone()) {
                return Err(Error::WordList {
                    name,
                    message: format!("duplicate entry {w:?}"),
                });
            }
            list.push(w);
        }
        Ok(WordList {
            name,
            words: list,
            index,
        })
    }

    /// Parses one word per line; blank lines and `#` comments are skipped.
    pub fn parse(name: impl Into<String>, contents: &str) -> Result<Self> {
        WordList::new(
            name,
            contents
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        WordList::parse(name, &contents)
    }

    pub fn builtin(list: BuiltinList) -> WordList {
        let (name, contents) = list.source();
        WordList::parse(name, contents).expect("shipped word lists are valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains(word)
    }
}
