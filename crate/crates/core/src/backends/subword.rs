use std::collections::HashSet;
use std::path::Path;

use crate::corpus::TokenSequence;
use crate::{Error, Result};

use super::TokenScore;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubwordPiece {
    pub piece: String,
    /// Index of the token this piece belongs to.
    pub word_index: usize,
}

/// Subword pieces of a token sequence; word indices are non-decreasing and
/// every token contributes at least one piece.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubwordSequence {
    pieces: Vec<SubwordPiece>,
    n_words: usize,
}

impl SubwordSequence {
    pub fn pieces(&self) -> &[SubwordPiece] {
        &self.pieces
    }

    pub fn n_words(&self) -> usize {
        self.n_words
    }

    /// Index of the first piece of every word.
    pub fn first_pieces(&self) -> Vec<usize> {
        let mut firsts = Vec::with_capacity(self.n_words);
        for (i, p) in self.pieces.iter().enumerate() {
            if firsts.len() == p.word_index {
                firsts.push(i);
            }
        }
        firsts
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubwordSplitter {
    /// Every token is a single piece.
    WholeWord,
    /// Greedy longest-match-first wordpiece over a fixed vocabulary.
    WordPiece { vocab: HashSet<String> },
}

impl SubwordSplitter {
    pub fn wordpiece<I, S>(vocab: I) -> SubwordSplitter
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SubwordSplitter::WordPiece {
            vocab: vocab.into_iter().map(Into::into).collect(),
        }
    }

    pub fn wordpiece_from_file(path: &Path) -> Result<SubwordSplitter> {
        let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(SubwordSplitter::wordpiece(
            contents
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string),
        ))
    }

    pub fn split(&self, seq: &TokenSequence) -> SubwordSequence {
        let mut pieces = Vec::new();
        for (word_index, tok) in seq.tokens().iter().enumerate() {
            match self {
                SubwordSplitter::WholeWord => pieces.push(SubwordPiece {
                    piece: tok.surface.clone(),
                    word_index,
                }),
                SubwordSplitter::WordPiece { vocab } => {
                    for piece in wordpiece(&tok.surface.to_lowercase(), vocab) {
                        pieces.push(SubwordPiece { piece, word_index });
                    }
                }
            }
        }
        SubwordSequence {
            pieces,
            n_words: seq.len(),
        }
    }
}

fn wordpiece(word: &str, vocab: &HashSet<String>) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let mut end = chars.len();
        let mut found = None;
        while end > start {
            let mut candidate: String = chars[start..end].iter().collect();
            if start > 0 {
                candidate.insert_str(0, "##");
            }
            if vocab.contains(&candidate) {
                found = Some(candidate);
                break;
            }
            end -= 1;
        }
        match found {
            Some(piece) => {
                out.push(piece);
                start = end;
            }
            // unsplittable words stay whole, like an [UNK] piece covering the word
            None => return vec![word.to_string()],
        }
    }
    out
}

/// Collapses piece scores to one score per word: the minimum over the word's
/// pieces, so a word is as implausible as its least plausible piece.
pub fn word_scores(seq: &SubwordSequence, piece_scores: &[f64]) -> Vec<TokenScore> {
    assert_eq!(seq.pieces.len(), piece_scores.len(), "one score per piece");
    let mut scores = vec![f64::INFINITY; seq.n_words];
    for (p, &s) in seq.pieces.iter().zip(piece_scores) {
        scores[p.word_index] = scores[p.word_index].min(s);
    }
    scores
        .into_iter()
        .enumerate()
        .map(|(word_index, score)| TokenScore { word_index, score })
        .collect()
}
