//! Bias and quality metrics.
//!
//! - [`perplexity`]: corpus and per-record perplexity under a language model.
//! - [`transfer_accuracy`]: how far counterfactuals moved away from the
//!   original gender according to a classifier.
//! - [`fairness`]: true- and false-positive rate differences between groups.
//! - [`word2vec`]: skip-gram with negative sampling, trained from scratch.
//! - [`weat`]: the embedding association statistic and its effect size.
//! - [`report`]: one row of metrics per ablation variant.

use serde::Serialize;

use crate::backends::{GenderClassifier, LanguageModel};
use crate::corpus::{Corpus, Gender};
use crate::{Error, Result};

pub mod fairness;
pub mod report;
pub mod weat;
pub mod word2vec;

pub use fairness::{load_fairness_csv, tprd_fprd, FairnessMetrics, FairnessRecord, GroupRates};
pub use report::{ablation_report, AblationTable, VariantMetrics, MISSING_CELL};
pub use weat::{cosine, weat, WeatResult, WeatSpec};
pub use word2vec::{train_word2vec, train_word2vec_sentences, word2vec_sentences, EmbeddingTable, Word2VecConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordPerplexity {
    pub id: String,
    pub logprob: f64,
    pub n_tokens: usize,
    pub perplexity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerplexityReport {
    /// `exp(-Σ logprob / Σ n_tokens)` over the whole corpus.
    pub perplexity: f64,
    pub total_logprob: f64,
    pub total_tokens: usize,
    pub records: Vec<RecordPerplexity>,
}

/// Scores every record with `lm`. Records the model assigns zero tokens are
/// reported with perplexity 1 and contribute nothing to the corpus value.
pub fn perplexity(corpus: &Corpus, lm: &dyn LanguageModel) -> Result<PerplexityReport> {
    if corpus.is_empty() {
        return Err(Error::Empty("perplexity needs at least one record".into()));
    }
    let mut records = Vec::with_capacity(corpus.len());
    let mut total_logprob = 0.0;
    let mut total_tokens = 0;
    for r in &corpus.records {
        let score = lm.lm_logprob(&r.text).map_err(|e| Error::Stage {
            stage: "ppl",
            record_id: r.id.clone(),
            source: Box::new(e.into()),
        })?;
        total_logprob += score.logprob;
        total_tokens += score.n_tokens;
        let perplexity = if score.n_tokens == 0 {
            1.0
        } else {
            (-score.logprob / score.n_tokens as f64).exp()
        };
        records.push(RecordPerplexity {
            id: r.id.clone(),
            logprob: score.logprob,
            n_tokens: score.n_tokens,
            perplexity,
        });
    }
    if total_tokens == 0 {
        return Err(Error::Empty("the language model scored zero tokens".into()));
    }
    Ok(PerplexityReport {
        perplexity: (-total_logprob / total_tokens as f64).exp(),
        total_logprob,
        total_tokens,
        records,
    })
}

/// A counterfactual together with the gender of the text it was made from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferInstance {
    pub original_gender: Gender,
    pub text: String,
}

/// Mean of `1 - p(original gender | counterfactual)`, times 100.
///
/// With `hard`, each instance instead counts 1 when the classifier prefers
/// the flipped gender (`p(original) < 0.5`) and 0 otherwise.
pub fn transfer_accuracy(instances: &[TransferInstance], classifier: &dyn GenderClassifier, hard: bool) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::Empty(
            "transfer accuracy needs at least one counterfactual".into(),
        ));
    }
    let mut total = 0.0;
    for (i, inst) in instances.iter().enumerate() {
        let verdict = classifier.classify_gender(&inst.text).map_err(|e| Error::Stage {
            stage: "transfer",
            record_id: i.to_string(),
            source: Box::new(e.into()),
        })?;
        let p_orig = inst.original_gender.probability(verdict.p_female);
        total += if hard {
            f64::from(u8::from(p_orig < 0.5))
        } else {
            1.0 - p_orig
        };
    }
    Ok(100.0 * total / instances.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::{LexiconClassifier, UniformLm};
    use crate::backends::ngram::{NgramConfig, NgramLm};
    use crate::backends::{BackendError, GenderVerdict, LmScore};
    use crate::corpus::TextRecord;
    use proptest::prelude::*;

    fn corpus(texts: &[&str]) -> Corpus {
        Corpus::new(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| TextRecord::new(format!("r{i}"), *t))
                .collect(),
            "test",
        )
    }

    struct CertainLm;

    impl LanguageModel for CertainLm {
        fn lm_logprob(&self, text: &str) -> Result<LmScore, BackendError> {
            Ok(LmScore {
                logprob: 0.0,
                n_tokens: text.split_whitespace().count(),
            })
        }
    }

    /// Returns a fixed `p_female` for every text.
    struct FixedClassifier(f64);

    impl GenderClassifier for FixedClassifier {
        fn classify_gender(&self, _: &str) -> Result<GenderVerdict, BackendError> {
            Ok(GenderVerdict { p_female: self.0 })
        }
    }

    /// Reads `p_female` from the text itself.
    struct EchoClassifier;

    impl GenderClassifier for EchoClassifier {
        fn classify_gender(&self, text: &str) -> Result<GenderVerdict, BackendError> {
            Ok(GenderVerdict {
                p_female: text.parse().unwrap(),
            })
        }
    }

    #[test]
    fn uniform_lm_perplexity_is_vocab_size() {
        let lm = UniformLm { vocab_size: 50 };
        let report = perplexity(&corpus(&["a b c", "the nurse is here ."]), &lm).unwrap();
        assert!((report.perplexity - 50.0).abs() < 1e-9);
        for r in &report.records {
            assert!((r.perplexity - 50.0).abs() < 1e-9);
        }
    }

    #[test]
    fn certain_lm_perplexity_is_one() {
        let report = perplexity(&corpus(&["a b c"]), &CertainLm).unwrap();
        assert_eq!(report.perplexity, 1.0);
    }

    #[test]
    fn trigram_perplexity_matches_hand_product() {
        let train = ["the cat sat", "the dog sat", "a cat ran"];
        let lm = NgramLm::train(train.iter().copied(), &NgramConfig::default()).unwrap();
        let report = perplexity(&corpus(&["the cat"]), &lm).unwrap();
        // vocab {the, cat, sat, dog, a, ran} + <unk>, 9 training tokens.
        let p_the: f64 = 0.1 * 3.0 / 16.0 + 0.3 * 2.0 / 3.0 + 0.6 * 2.0 / 3.0;
        let p_cat: f64 = 0.1 * 3.0 / 16.0 + 0.3 * 0.5 + 0.6 * 0.5;
        let expected = (p_the * p_cat).powf(-0.5);
        assert!(
            (report.perplexity - expected).abs() < 1e-12,
            "{} vs {expected}",
            report.perplexity
        );
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(perplexity(&corpus(&[]), &CertainLm), Err(Error::Empty(_))));
    }

    #[test]
    fn corpus_perplexity_pools_tokens() {
        let lm = NgramLm::train(["a b", "b a"], &NgramConfig::unigram()).unwrap();
        let c = corpus(&["a", "a b b"]);
        let report = perplexity(&c, &lm).unwrap();
        let total: f64 = report.records.iter().map(|r| r.logprob).sum();
        assert!((report.perplexity - (-total / 4.0).exp()).abs() < 1e-12);
        assert_eq!(report.total_tokens, 4);
    }

    fn instance(g: Gender, text: &str) -> TransferInstance {
        TransferInstance {
            original_gender: g,
            text: text.into(),
        }
    }

    #[test]
    fn transfer_accuracy_examples() {
        let female = |t: &str| instance(Gender::Female, t);
        let set = [female("x"), female("y")];
        assert_eq!(transfer_accuracy(&set, &FixedClassifier(1.0), false).unwrap(), 0.0);
        assert_eq!(transfer_accuracy(&set, &FixedClassifier(0.0), false).unwrap(), 100.0);
        let mixed = [female("0.2"), instance(Gender::Male, "0.6")];
        // p(orig) = 0.2 and 1 - 0.6 = 0.4.
        assert!((transfer_accuracy(&mixed, &EchoClassifier, false).unwrap() - 70.0).abs() < 1e-12);
        assert_eq!(transfer_accuracy(&mixed, &EchoClassifier, true).unwrap(), 100.0);
    }

    #[test]
    fn lexicon_classifier_transfer() {
        let set = [
            instance(Gender::Female, "he is a nurse"),
            instance(Gender::Female, "she is a nurse"),
        ];
        let acc = transfer_accuracy(&set, &LexiconClassifier::builtin(), false).unwrap();
        assert_eq!(acc, 50.0);
    }

    proptest! {
        #[test]
        fn transfer_accuracy_bounds(ps in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..30)) {
            let set: Vec<_> = ps
                .iter()
                .map(|&(p, f)| instance(if f { Gender::Female } else { Gender::Male }, &p.to_string()))
                .collect();
            let soft = transfer_accuracy(&set, &EchoClassifier, false).unwrap();
            prop_assert!((0.0..=100.0).contains(&soft));

            let hard_ps: Vec<_> = ps.iter().map(|&(p, f)| (if p < 0.5 { 0.0 } else { 1.0 }, f)).collect();
            let hard_set: Vec<_> = hard_ps
                .iter()
                .map(|&(p, f)| instance(if f { Gender::Female } else { Gender::Male }, &p.to_string()))
                .collect();
            let flipped = hard_ps.iter().filter(|&&(p, f)| (p == 1.0) != f).count();
            let expected = 100.0 * flipped as f64 / hard_ps.len() as f64;
            prop_assert!((transfer_accuracy(&hard_set, &EchoClassifier, false).unwrap() - expected).abs() < 1e-9);
        }

        #[test]
        fn oov_insertion_never_lowers_perplexity(words in prop::collection::vec("[abc]", 1..8), at in 0usize..8) {
            // Add-one smoothing gives <unk> the smallest unigram mass, so the
            // inserted factor is below every other per-token probability.
            let lm = NgramLm::train(["a b c a b", "c b a"], &NgramConfig::unigram()).unwrap();
            let text = words.join(" ");
            let mut with_oov = words.clone();
            with_oov.insert(at.min(words.len()), "zzz".to_string());
            let base = perplexity(&corpus(&[&text]), &lm).unwrap().perplexity;
            let worse = perplexity(&corpus(&[&with_oov.join(" ")]), &lm).unwrap().perplexity;
            prop_assert!(worse >= base - 1e-9, "{worse} < {base}");
        }
    }
}
