//! Interpolated n-gram language model (order 1 to 3) used as the mock LM.
//!
//! `P(w | u v) = λ3·P3(w | u v) + λ2·P2(w | v) + λ1·P1(w)` where `P1` is
//! add-one smoothed over the vocabulary plus `<unk>`, and the higher orders
//! are maximum-likelihood estimates that fall back to the next lower order
//! when their history was never seen. Sentences are padded on the left with
//! a begin marker; no end marker is scored.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::tokenize;
use crate::{Error, Result};

use super::{BackendError, LanguageModel, LmScore};

pub const UNK: &str = "<unk>";
const BOS: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NgramConfig {
    pub order: usize,
    /// Interpolation weights, lowest order first; one per order.
    pub lambdas: Vec<f64>,
}

impl Default for NgramConfig {
    fn default() -> Self {
        NgramConfig {
            order: 3,
            lambdas: vec![0.1, 0.3, 0.6],
        }
    }
}

impl NgramConfig {
    pub fn unigram() -> Self {
        NgramConfig {
            order: 1,
            lambdas: vec![1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.order) {
            return Err(Error::Config(format!(
                "n-gram order must be 1, 2 or 3, got {}",
                self.order
            )));
        }
        if self.lambdas.len() != self.order {
            return Err(Error::Config(format!(
                "expected {} interpolation weights, got {}",
                self.order,
                self.lambdas.len()
            )));
        }
        if self.lambdas.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::Config("interpolation weights must be positive".into()));
        }
        let sum: f64 = self.lambdas.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("interpolation weights sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Lowercased word and punctuation tokens, as the model sees them.
pub fn lm_tokens(text: &str) -> Vec<String> {
    tokenize(text).surfaces().map(str::to_lowercase).collect()
}

/// On-disk form: every table as a sorted array so that serialization is
/// byte-stable.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Stored {
    config: NgramConfig,
    vocab: Vec<String>,
    unigrams: Vec<u64>,
    bigrams: Vec<(u32, u32, u64)>,
    trigrams: Vec<(u32, u32, u32, u64)>,
}

#[derive(Debug, Clone)]
pub struct NgramLm {
    config: NgramConfig,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    unigrams: Vec<u64>,
    total: u64,
    bigrams: HashMap<(u32, u32), u64>,
    bigram_ctx: HashMap<u32, u64>,
    trigrams: HashMap<(u32, u32, u32), u64>,
    trigram_ctx: HashMap<(u32, u32), u64>,
}

impl NgramLm {
    pub fn train<'a>(sentences: impl IntoIterator<Item = &'a str>, config: &NgramConfig) -> Result<Self> {
        config.validate()?;
        let sentences: Vec<Vec<String>> = sentences.into_iter().map(lm_tokens).collect();
        if sentences.iter().all(Vec::is_empty) {
            return Err(Error::Empty("n-gram training corpus has no tokens".into()));
        }
        let mut vocab: Vec<String> = sentences.iter().flatten().cloned().collect();
        vocab.push(UNK.to_string());
        vocab.sort();
        vocab.dedup();
        let index: HashMap<String, u32> = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();

        let mut unigrams = vec![0u64; vocab.len()];
        let mut bigrams: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        let mut trigrams: BTreeMap<(u32, u32, u32), u64> = BTreeMap::new();
        for sentence in &sentences {
            let (mut u, mut v) = (BOS, BOS);
            for w in sentence {
                let w = index[w];
                unigrams[w as usize] += 1;
                if config.order >= 2 {
                    *bigrams.entry((v, w)).or_default() += 1;
                }
                if config.order >= 3 {
                    *trigrams.entry((u, v, w)).or_default() += 1;
                }
                (u, v) = (v, w);
            }
        }
        Ok(Self::assemble(Stored {
            config: config.clone(),
            vocab,
            unigrams,
            bigrams: bigrams.into_iter().map(|((a, b), c)| (a, b, c)).collect(),
            trigrams: trigrams.into_iter().map(|((a, b, c), n)| (a, b, c, n)).collect(),
        }))
    }

    fn assemble(stored: Stored) -> Self {
        let index = stored
            .vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        let mut bigram_ctx = HashMap::new();
        let mut bigrams = HashMap::new();
        for &(v, w, c) in &stored.bigrams {
            bigrams.insert((v, w), c);
            *bigram_ctx.entry(v).or_default() += c;
        }
        let mut trigram_ctx = HashMap::new();
        let mut trigrams = HashMap::new();
        for &(u, v, w, c) in &stored.trigrams {
            trigrams.insert((u, v, w), c);
            *trigram_ctx.entry((u, v)).or_default() += c;
        }
        NgramLm {
            total: stored.unigrams.iter().sum(),
            config: stored.config,
            vocab: stored.vocab,
            index,
            unigrams: stored.unigrams,
            bigrams,
            bigram_ctx,
            trigrams,
            trigram_ctx,
        }
    }

    fn stored(&self) -> Stored {
        let mut bigrams: Vec<_> = self.bigrams.iter().map(|(&(a, b), &c)| (a, b, c)).collect();
        bigrams.sort_unstable();
        let mut trigrams: Vec<_> = self.trigrams.iter().map(|(&(a, b, c), &n)| (a, b, c, n)).collect();
        trigrams.sort_unstable();
        Stored {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            unigrams: self.unigrams.clone(),
            bigrams,
            trigrams,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.stored()).expect("n-gram tables serialize")
    }

    pub fn from_json(json: &str) -> std::result::Result<Self, serde_json::Error> {
        let stored: Stored = serde_json::from_str(json)?;
        Ok(Self::assemble(stored))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let lm = Self::from_json(&json).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        lm.config.validate()?;
        if lm.unigrams.len() != lm.vocab.len() || !lm.index.contains_key(UNK) {
            return Err(Error::parse(path, 1, "inconsistent n-gram tables"));
        }
        Ok(lm)
    }

    pub fn config(&self) -> &NgramConfig {
        &self.config
    }

    /// Vocabulary size including `<unk>`.
    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or_else(|| self.index[UNK])
    }

    fn p1(&self, w: u32) -> f64 {
        (self.unigrams[w as usize] + 1) as f64 / (self.total + self.vocab.len() as u64) as f64
    }

    fn p2_hat(&self, v: u32, w: u32) -> f64 {
        match self.bigram_ctx.get(&v) {
            Some(&ctx) => *self.bigrams.get(&(v, w)).unwrap_or(&0) as f64 / ctx as f64,
            None => self.p1(w),
        }
    }

    fn p3_hat(&self, u: u32, v: u32, w: u32) -> f64 {
        match self.trigram_ctx.get(&(u, v)) {
            Some(&ctx) => *self.trigrams.get(&(u, v, w)).unwrap_or(&0) as f64 / ctx as f64,
            None => self.p2_hat(v, w),
        }
    }

    /// Interpolated probability of `w` after the history `(u, v)`.
    fn prob(&self, u: u32, v: u32, w: u32) -> f64 {
        let l = &self.config.lambdas;
        let mut p = l[0] * self.p1(w);
        if self.config.order >= 2 {
            p += l[1] * self.p2_hat(v, w);
        }
        if self.config.order >= 3 {
            p += l[2] * self.p3_hat(u, v, w);
        }
        p
    }

    /// Probability of `word` given up to two preceding words (most recent last).
    pub fn word_prob(&self, history: &[&str], word: &str) -> f64 {
        let ctx = |k: usize| {
            history
                .len()
                .checked_sub(k)
                .map(|i| self.id(&history[i].to_lowercase()))
                .unwrap_or(BOS)
        };
        self.prob(ctx(2), ctx(1), self.id(&word.to_lowercase()))
    }
}

impl LanguageModel for NgramLm {
    fn lm_logprob(&self, text: &str) -> Result<LmScore, BackendError> {
        let tokens = lm_tokens(text);
        if tokens.is_empty() {
            return Err(BackendError::InvalidInput("cannot score empty text".into()));
        }
        let (mut u, mut v) = (BOS, BOS);
        let mut logprob = 0.0;
        for t in &tokens {
            let w = self.id(t);
            logprob += self.prob(u, v, w).ln();
            (u, v) = (v, w);
        }
        Ok(LmScore {
            logprob,
            n_tokens: tokens.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const CORPUS: [&str; 3] = ["the cat sat", "the dog sat", "a cat ran"];

    #[test]
    fn hand_evaluated_trigram() {
        let lm = NgramLm::train(CORPUS, &NgramConfig::default()).unwrap();
        // 9 training tokens, 6 types plus <unk>: P1(w) = (c + 1) / 16.
        // "the" after two begin markers: P1 = 3/16, P2 = 2/3, P3 = 2/3.
        let p_the: f64 = 0.1 * 3.0 / 16.0 + 0.3 * 2.0 / 3.0 + 0.6 * 2.0 / 3.0;
        // "cat" after "the": P1 = 3/16, P2 = 1/2, P3 = 1/2.
        let p_cat: f64 = 0.1 * 3.0 / 16.0 + 0.3 * 0.5 + 0.6 * 0.5;
        let s = lm.lm_logprob("the cat").unwrap();
        assert_eq!(s.n_tokens, 2);
        assert!((s.logprob - (p_the.ln() + p_cat.ln())).abs() < 1e-12);
        assert!((lm.word_prob(&["the"], "cat") - p_cat).abs() < 1e-12);
    }

    #[test]
    fn unseen_history_backs_off() {
        let lm = NgramLm::train(CORPUS, &NgramConfig::default()).unwrap();
        // "ran" was never a history: P2 and P3 fall back to P1(the) = 3/16.
        let p1 = 3.0 / 16.0;
        assert!((lm.word_prob(&["cat", "ran"], "the") - p1).abs() < 1e-12);
        // An unknown word takes the <unk> mass.
        let unk = lm.word_prob(&["zebra", "zebra"], "zebra");
        assert!((unk - 1.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn memorizes_its_only_sentence() {
        let lm = NgramLm::train(["the cat sat ."], &NgramConfig::default()).unwrap();
        let own = lm.lm_logprob("the cat sat .").unwrap().logprob;
        let shuffled = lm.lm_logprob("sat . the cat").unwrap().logprob;
        assert!(own > -0.5, "{own}");
        assert!(own > shuffled);
    }

    #[test]
    fn order_one_is_the_add_one_unigram() {
        let lm = NgramLm::train(CORPUS, &NgramConfig::unigram()).unwrap();
        let s = lm.lm_logprob("cat zebra").unwrap();
        assert!((s.logprob - ((3.0f64 / 16.0).ln() + (1.0f64 / 16.0).ln())).abs() < 1e-12);
    }

    #[test]
    fn retraining_gives_identical_bytes() {
        let a = NgramLm::train(CORPUS, &NgramConfig::default()).unwrap().to_json();
        let b = NgramLm::train(CORPUS, &NgramConfig::default()).unwrap().to_json();
        assert_eq!(a, b);
        let back = NgramLm::from_json(&a).unwrap();
        assert_eq!(back.to_json(), a);
    }

    #[test]
    fn rejects_bad_configs_and_empty_corpus() {
        let bad = |order, lambdas: &[f64]| {
            NgramLm::train(
                CORPUS,
                &NgramConfig {
                    order,
                    lambdas: lambdas.to_vec(),
                },
            )
            .is_err()
        };
        assert!(bad(3, &[0.2, 0.3, 0.6]));
        assert!(bad(3, &[0.0, 0.4, 0.6]));
        assert!(bad(2, &[0.5, 0.25, 0.25]));
        assert!(bad(4, &[0.25; 4]));
        assert!(NgramLm::train(["", " "], &NgramConfig::default()).is_err());
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lm.json");
        let lm = NgramLm::train(CORPUS, &NgramConfig::default()).unwrap();
        lm.save(&path).unwrap();
        let back = NgramLm::load(&path).unwrap();
        assert_eq!(
            back.lm_logprob("a dog sat").unwrap(),
            lm.lm_logprob("a dog sat").unwrap()
        );
    }

    proptest! {
        #[test]
        fn distribution_sums_to_one(h1 in 0usize..8, h2 in 0usize..8) {
            let lm = NgramLm::train(CORPUS, &NgramConfig::default()).unwrap();
            let words = ["the", "cat", "sat", "dog", "a", "ran", "zebra", "."];
            let history = [words[h1], words[h2]];
            let total: f64 = lm.vocab.iter().map(|w| lm.word_prob(&history, w)).sum();
            prop_assert!((total - 1.0).abs() < 1e-9, "{}", total);
        }
    }
}
