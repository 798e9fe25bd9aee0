use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const UNK_ID: usize = 3;

/// Word-level vocabulary; the four specials occupy ids 0 to 3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Specials followed by the distinct words of `sentences` in sorted order.
    pub fn build<'a>(sentences: impl IntoIterator<Item = &'a [String]>) -> Self {
        let mut words: Vec<&String> = sentences.into_iter().flatten().collect();
        words.sort();
        words.dedup();
        let mut tokens: Vec<String> = [PAD, BOS, EOS, UNK].map(String::from).to_vec();
        tokens.extend(
            words
                .into_iter()
                .filter(|w| !matches!(w.as_str(), PAD | BOS | EOS | UNK))
                .cloned(),
        );
        Vocab::from(tokens)
    }

    /// Checks the special-token layout of a deserialized vocabulary.
    pub fn validate(&self) -> Result<()> {
        for (id, special) in [PAD, BOS, EOS, UNK].iter().enumerate() {
            if self.tokens.get(id).map(String::as_str) != Some(special) {
                return Err(Error::Checkpoint(format!("vocabulary id {id} must be {special}")));
            }
        }
        if self.index.len() != self.tokens.len() {
            return Err(Error::Checkpoint("vocabulary has duplicate tokens".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn encode(&self, words: &[String]) -> Vec<usize> {
        words.iter().map(|w| self.id(w)).collect()
    }

    /// Joins tokens with spaces, stopping at `<eos>` and skipping `<pad>`/`<bos>`.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .take_while(|&&i| i != EOS_ID)
            .filter(|&&i| i != PAD_ID && i != BOS_ID)
            .map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Lowercased word and punctuation tokens.
pub fn toy_tokens(text: &str) -> Vec<String> {
    crate::corpus::tokenize(text)
        .surfaces()
        .map(str::to_lowercase)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specials_come_first_once() {
        let s = [toy_tokens("She is a nurse ."), toy_tokens("he is")];
        let v = Vocab::build(s.iter().map(Vec::as_slice));
        v.validate().unwrap();
        assert_eq!(v.id(PAD), 0);
        assert_eq!(v.len(), 4 + 6);
        assert_eq!(v.id("zebra"), UNK_ID);
        let ids = v.encode(&toy_tokens("she is a nurse"));
        assert_eq!(v.decode(&[BOS_ID, ids[0], ids[1], EOS_ID, ids[2]]), "she is");
    }
}
