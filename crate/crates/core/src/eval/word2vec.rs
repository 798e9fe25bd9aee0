use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::biobjective::tensor::sigmoid;
use crate::corpus::{tokenize, Corpus};
use crate::{Error, Result};

/// Word vectors of one dimension, in vocabulary order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    data: Vec<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(entries: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let dim = entries.first().map_or(0, |(_, v)| v.len());
        let mut words = Vec::with_capacity(entries.len());
        let mut data = Vec::with_capacity(entries.len() * dim);
        let mut index = HashMap::with_capacity(entries.len());
        for (word, v) in entries {
            if v.len() != dim || dim == 0 {
                return Err(Error::Config(format!(
                    "embedding for {word:?} has dimension {}, expected {dim}",
                    v.len()
                )));
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::Config(format!("embedding for {word:?} has non-finite entries")));
            }
            if index.insert(word.clone(), words.len()).is_some() {
                return Err(Error::Config(format!("duplicate embedding for {word:?}")));
            }
            words.push(word);
            data.extend(v);
        }
        Ok(EmbeddingTable {
            dim,
            words,
            data,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(word)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    /// Text format: a `vocab_size dim` header, then `word v1 … vdim` per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.len(), self.dim);
        for (i, w) in self.words.iter().enumerate() {
            out.push_str(w);
            for x in &self.data[i * self.dim..(i + 1) * self.dim] {
                write!(out, " {x}").expect("writing to a string");
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "missing header"))?;
        let header: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(path, 1, format!("header: {e}")))?;
        let [n, dim] = header[..] else {
            return Err(Error::parse(path, 1, "header must be `vocab_size dim`"));
        };
        let mut entries = Vec::with_capacity(n);
        for (i, line) in lines {
            let mut fields = line.split_whitespace();
            let word = fields.next().expect("line is not blank").to_string();
            let v: Vec<f64> = fields
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(path, i + 1, format!("{e}")))?;
            if v.len() != dim {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("expected {dim} values, found {}", v.len()),
                ));
            }
            entries.push((word, v));
        }
        if entries.len() != n {
            return Err(Error::parse(
                path,
                1,
                format!("header announces {n} words, found {}", entries.len()),
            ));
        }
        EmbeddingTable::new(entries).map_err(|e| Error::parse(path, 0, e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Word2VecConfig {
    pub dim: usize,
    /// Maximum distance between centre and context word. Each centre word
    /// draws its effective window uniformly from `1..=window`.
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Initial learning rate, decayed linearly to `lr * 1e-4`.
    pub lr: f64,
    pub min_count: usize,
    pub seed: u64,
    /// 1 trains deterministically. More threads update shared weights
    /// without locks, so results vary from run to run.
    pub threads: usize,
}

impl Default for Word2VecConfig {
    fn default() -> Self {
        Word2VecConfig {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
            min_count: 1,
            seed: 0,
            threads: 1,
        }
    }
}

impl Word2VecConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("word2vec: {m}")));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.window == 0 {
            return bad("window must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if self.min_count == 0 {
            return bad("min_count must be at least 1");
        }
        if self.threads == 0 {
            return bad("threads must be at least 1");
        }
        Ok(())
    }
}

/// Lowercased word tokens of every record, punctuation dropped.
pub fn word2vec_sentences(corpus: &Corpus) -> Vec<Vec<String>> {
    corpus
        .records
        .iter()
        .map(|r| {
            tokenize(&r.text)
                .tokens()
                .iter()
                .filter(|t| t.is_word())
                .map(|t| t.surface.to_lowercase())
                .collect()
        })
        .collect()
}

pub fn train_word2vec(corpus: &Corpus, config: &Word2VecConfig) -> Result<EmbeddingTable> {
    train_word2vec_sentences(&word2vec_sentences(corpus), config)
}

/// Weights shared between training threads. Relaxed atomics keep lock-free
/// concurrent updates well defined; a single thread sees plain loads and stores.
struct SharedWeights(Vec<AtomicU64>);

impl SharedWeights {
    fn new(values: impl IntoIterator<Item = f64>) -> Self {
        SharedWeights(values.into_iter().map(|x| AtomicU64::new(x.to_bits())).collect())
    }

    fn read_row(&self, row: usize, dim: usize, out: &mut [f64]) {
        for (o, cell) in out.iter_mut().zip(&self.0[row * dim..(row + 1) * dim]) {
            *o = f64::from_bits(cell.load(Ordering::Relaxed));
        }
    }

    /// `row += k * x`.
    fn add_row(&self, row: usize, dim: usize, k: f64, x: &[f64]) {
        for (cell, xi) in self.0[row * dim..(row + 1) * dim].iter().zip(x) {
            let v = f64::from_bits(cell.load(Ordering::Relaxed)) + k * xi;
            cell.store(v.to_bits(), Ordering::Relaxed);
        }
    }

    fn into_values(self) -> Vec<f64> {
        self.0.into_iter().map(|c| f64::from_bits(c.into_inner())).collect()
    }
}

struct Trainer<'a> {
    config: &'a Word2VecConfig,
    input: SharedWeights,
    output: SharedWeights,
    noise: WeightedIndex<f64>,
    total_words: usize,
    processed: AtomicUsize,
}

impl Trainer<'_> {
    fn train_shard(&self, sentences: &[&[usize]], seed: u64) {
        let dim = self.config.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut centre = vec![0.0; dim];
        let mut target = vec![0.0; dim];
        let mut grad = vec![0.0; dim];
        let floor = self.config.lr * 1e-4;
        for _ in 0..self.config.epochs {
            for sentence in sentences {
                let done = self.processed.fetch_add(sentence.len(), Ordering::Relaxed);
                let progress = done as f64 / self.total_words as f64;
                let lr = (self.config.lr * (1.0 - progress)).max(floor);
                for (pos, &word) in sentence.iter().enumerate() {
                    let reach = rng.gen_range(1..=self.config.window);
                    let lo = pos.saturating_sub(reach);
                    let hi = (pos + reach).min(sentence.len() - 1);
                    for (ctx_pos, &context) in sentence.iter().enumerate().take(hi + 1).skip(lo) {
                        if ctx_pos == pos {
                            continue;
                        }
                        self.input.read_row(word, dim, &mut centre);
                        grad.iter_mut().for_each(|g| *g = 0.0);
                        for k in 0..=self.config.negatives {
                            let (t, label) = if k == 0 {
                                (context, 1.0)
                            } else {
                                let t = self.noise.sample(&mut rng);
                                if t == context {
                                    continue;
                                }
                                (t, 0.0)
                            };
                            self.output.read_row(t, dim, &mut target);
                            let score: f64 = centre.iter().zip(&target).map(|(a, b)| a * b).sum();
                            let g = (label - sigmoid(score)) * lr;
                            for (gi, ti) in grad.iter_mut().zip(&target) {
                                *gi += g * ti;
                            }
                            self.output.add_row(t, dim, g, &centre);
                        }
                        self.input.add_row(word, dim, 1.0, &grad);
                    }
                }
            }
        }
    }
}

/// Skip-gram with negative sampling over pre-tokenized sentences.
///
/// Words seen fewer than `min_count` times are dropped before training.
/// Negatives are drawn from the unigram distribution raised to 0.75.
pub fn train_word2vec_sentences(sentences: &[Vec<String>], config: &Word2VecConfig) -> Result<EmbeddingTable> {
    config.validate()?;
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in sentences {
        for w in s {
            *counts.entry(w.as_str()).or_default() += 1;
        }
    }
    let mut vocab: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= config.min_count).collect();
    if vocab.is_empty() {
        return Err(Error::Empty(format!(
            "word2vec vocabulary is empty after applying min_count {}",
            config.min_count
        )));
    }
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let ids: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, &(w, _))| (w, i)).collect();
    let encoded: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| s.iter().filter_map(|w| ids.get(w.as_str()).copied()).collect())
        .filter(|s: &Vec<usize>| s.len() > 1)
        .collect();

    let dim = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let half = 0.5 / dim as f64;
    let input = SharedWeights::new((0..vocab.len() * dim).map(|_| rng.gen_range(-half..half)));
    let noise = WeightedIndex::new(vocab.iter().map(|&(_, c)| (c as f64).powf(0.75))).expect("counts are positive");
    let total_words = encoded.iter().map(Vec::len).sum::<usize>() * config.epochs;
    let trainer = Trainer {
        config,
        input,
        output: SharedWeights::new(std::iter::repeat_n(0.0, vocab.len() * dim)),
        noise,
        total_words: total_words.max(1),
        processed: AtomicUsize::new(0),
    };

    let shards: Vec<Vec<&[usize]>> = (0..config.threads)
        .map(|t| {
            encoded
                .iter()
                .skip(t)
                .step_by(config.threads)
                .map(Vec::as_slice)
                .collect()
        })
        .collect();
    if config.threads == 1 {
        trainer.train_shard(&shards[0], config.seed.wrapping_add(1));
    } else {
        std::thread::scope(|scope| {
            for (t, shard) in shards.iter().enumerate() {
                let trainer = &trainer;
                scope.spawn(move || trainer.train_shard(shard, config.seed.wrapping_add(1 + t as u64)));
            }
        });
    }

    let values = trainer.input.into_values();
    let entries = vocab
        .iter()
        .enumerate()
        .map(|(i, &(w, _))| (w.to_string(), values[i * dim..(i + 1) * dim].to_vec()))
        .collect();
    EmbeddingTable::new(entries)
}
