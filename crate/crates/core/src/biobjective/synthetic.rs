//! Templated gendered sentences with a word-for-word gender-flip oracle.
//!
//! Every gendered word in a sentence agrees with the sentence's gender and
//! appears in the shipped attribute lists, so the lexicon classifier reads
//! the gender unambiguously. `her` only ever occurs as a possessive, which
//! keeps the flip a pure word mapping.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Gender;

/// `(female, male)` forms.
pub const GENDERED_PAIRS: [(&str, &str); 13] = [
    ("she", "he"),
    ("her", "his"),
    ("woman", "man"),
    ("girl", "boy"),
    ("mother", "father"),
    ("sister", "brother"),
    ("daughter", "son"),
    ("wife", "husband"),
    ("aunt", "uncle"),
    ("bride", "groom"),
    ("grandmother", "grandfather"),
    ("girlfriend", "boyfriend"),
    ("mom", "dad"),
];

const PERSONS: [usize; 11] = [2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12];

const CAREERS: [&str; 20] = [
    "nurse",
    "teacher",
    "engineer",
    "pilot",
    "chef",
    "doctor",
    "lawyer",
    "artist",
    "writer",
    "farmer",
    "baker",
    "dentist",
    "architect",
    "painter",
    "programmer",
    "secretary",
    "librarian",
    "scientist",
    "banker",
    "designer",
];

const PLACES: [&str; 15] = [
    "paris", "london", "tokyo", "berlin", "madrid", "rome", "boston", "chicago", "dublin", "oslo", "vienna", "lisbon",
    "prague", "seoul", "sydney",
];

const OBJECTS: [&str; 15] = [
    "book", "garden", "car", "house", "piano", "bicycle", "letter", "painting", "boat", "kitchen", "camera", "guitar",
    "laptop", "fence", "roof",
];

const VERBS: [&str; 12] = [
    "painted", "sold", "bought", "fixed", "cleaned", "found", "borrowed", "repaired", "moved", "built", "liked", "lost",
];

const ADJECTIVES: [&str; 10] = [
    "young", "old", "tall", "quiet", "kind", "clever", "busy", "happy", "famous", "brave",
];

/// Templates in their female form; `{p}` persons, `{q}` a second person,
/// `{c}` careers, `{l}` places, `{o}` objects, `{v}` verbs, `{a}` adjectives.
const TEMPLATES: [&str; 7] = [
    "the {p} is a {c} .",
    "she works as a {c} in {l} .",
    "my {p} {v} her {o} .",
    "the {p} lives in {l} with her {q} .",
    "she said that her {p} {v} it .",
    "her {p} is a {a} {c} .",
    "yesterday the {p} visited {l} .",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticExample {
    pub text: String,
    pub gender: Gender,
    /// The oracle counterfactual of `text`.
    pub counterfactual: String,
}

/// Maps every gendered word to its counterpart, leaving other tokens alone.
pub fn flip_oracle(text: &str) -> String {
    text.split(' ')
        .map(|w| {
            GENDERED_PAIRS
                .iter()
                .find_map(|&(f, m)| {
                    if w == f {
                        Some(m)
                    } else if w == m {
                        Some(f)
                    } else {
                        None
                    }
                })
                .unwrap_or(w)
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &[&'a str]) -> &'a str {
    items.choose(rng).expect("non-empty word list")
}

/// `n` sentences, half female and half male in expectation.
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<SyntheticExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let persons: Vec<&str> = PERSONS.iter().map(|&i| GENDERED_PAIRS[i].0).collect();
    (0..n)
        .map(|_| {
            let template = pick(&mut rng, &TEMPLATES);
            let p = pick(&mut rng, &persons);
            let mut q = pick(&mut rng, &persons);
            while q == p {
                q = pick(&mut rng, &persons);
            }
            let female = template
                .replace("{p}", p)
                .replace("{q}", q)
                .replace("{c}", pick(&mut rng, &CAREERS))
                .replace("{l}", pick(&mut rng, &PLACES))
                .replace("{o}", pick(&mut rng, &OBJECTS))
                .replace("{v}", pick(&mut rng, &VERBS))
                .replace("{a}", pick(&mut rng, &ADJECTIVES));
            let (text, gender) = if rng.gen_bool(0.5) {
                (female, Gender::Female)
            } else {
                (flip_oracle(&female), Gender::Male)
            };
            let counterfactual = flip_oracle(&text);
            SyntheticExample {
                text,
                gender,
                counterfactual,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::LexiconClassifier;
    use crate::backends::GenderClassifier;
    use std::collections::BTreeSet;

    #[test]
    fn oracle_is_an_involution() {
        for ex in synthetic_corpus(300, 1) {
            assert_ne!(ex.text, ex.counterfactual);
            assert_eq!(flip_oracle(&ex.counterfactual), ex.text);
        }
    }

    #[test]
    fn classifier_reads_the_labelled_gender() {
        let c = LexiconClassifier::builtin();
        for ex in synthetic_corpus(300, 2) {
            let p = c.classify_gender(&ex.text).unwrap().p_female;
            assert_eq!(p, if ex.gender == Gender::Female { 1.0 } else { 0.0 }, "{}", ex.text);
            let q = c.classify_gender(&ex.counterfactual).unwrap().p_female;
            assert_eq!(q, 1.0 - p);
        }
    }

    #[test]
    fn vocabulary_is_small_and_seeded() {
        let corpus = synthetic_corpus(2000, 3);
        let vocab: BTreeSet<&str> = corpus.iter().flat_map(|e| e.text.split(' ')).collect();
        assert!(vocab.len() <= 296, "{}", vocab.len());
        assert_eq!(corpus, synthetic_corpus(2000, 3));
        let female = corpus.iter().filter(|e| e.gender == Gender::Female).count();
        assert!((900..1100).contains(&female));
    }
}
