use std::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Word,
    Punct,
}

/// A token with its byte span in the original text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub start: usize,
    pub end: usize,
    pub kind: TokenKind,
}

impl Token {
    pub fn is_word(&self) -> bool {
        self.kind == TokenKind::Word
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    tokens: Vec<Token>,
    original: String,
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Splits text into word and punctuation tokens.
///
/// A word is a maximal run of alphanumeric characters, where an apostrophe
/// counts as part of the word when it sits between two alphanumerics
/// (`Tomas's`, `don't`). Every other non-whitespace character is its own
/// punctuation token.
pub fn tokenize(text: &str) -> TokenSequence {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let byte_end = |i: usize| chars.get(i).map_or(text.len(), |&(b, _)| b);
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_alphanumeric() {
            let mut j = i + 1;
            while j < chars.len() {
                let cj = chars[j].1;
                if cj.is_alphanumeric() {
                    j += 1;
                } else if is_apostrophe(cj) && chars.get(j + 1).is_some_and(|&(_, n)| n.is_alphanumeric()) {
                    j += 2;
                } else {
                    break;
                }
            }
            let end = byte_end(j);
            tokens.push(Token {
                surface: text[start..end].to_string(),
                start,
                end,
                kind: TokenKind::Word,
            });
            i = j;
        } else {
            let end = byte_end(i + 1);
            tokens.push(Token {
                surface: text[start..end].to_string(),
                start,
                end,
                kind: TokenKind::Punct,
            });
            i += 1;
        }
    }
    TokenSequence {
        tokens,
        original: text.to_string(),
    }
}

impl TokenSequence {
    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn original(&self) -> &str {
        &self.original
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.surface.as_str())
    }

    /// Text between token `i - 1` (or the start) and token `i` (or the end when `i == len`).
    pub fn gap_before(&self, i: usize) -> &str {
        let from = if i == 0 { 0 } else { self.tokens[i - 1].end };
        let to = self.tokens.get(i).map_or(self.original.len(), |t| t.start);
        &self.original[from..to]
    }

    /// Rebuilds the original text from tokens and gaps.
    pub fn reassemble(&self) -> String {
        self.splice(&[])
    }

    /// Rebuilds the text with each token range in `edits` replaced by the
    /// given string. Gaps around an edited range are kept, gaps inside it are
    /// dropped. Ranges must be sorted and disjoint.
    pub fn splice(&self, edits: &[(Range<usize>, String)]) -> String {
        let mut out = String::with_capacity(self.original.len());
        let mut edits = edits.iter().peekable();
        let mut i = 0;
        while i < self.tokens.len() {
            out.push_str(self.gap_before(i));
            match edits.peek() {
                Some((range, text)) if range.start == i => {
                    debug_assert!(range.end > range.start && range.end <= self.tokens.len());
                    out.push_str(text);
                    i = range.end;
                    edits.next();
                }
                _ => {
                    out.push_str(&self.tokens[i].surface);
                    i += 1;
                }
            }
        }
        out.push_str(self.gap_before(self.tokens.len()));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn surfaces(s: &str) -> Vec<String> {
        tokenize(s).surfaces().map(str::to_string).collect()
    }

    #[test]
    fn simple_sentence() {
        assert_eq!(surfaces("She is a nurse."), ["She", "is", "a", "nurse", "."]);
        let seq = tokenize("She is a nurse.");
        assert_eq!(seq.tokens()[4].kind, TokenKind::Punct);
    }

    #[test]
    fn empty_text() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn possessive_stays_one_token() {
        assert_eq!(
            surfaces("Tomas's clinical training"),
            ["Tomas's", "clinical", "training"]
        );
        assert_eq!(surfaces("Tomas’s book"), ["Tomas’s", "book"]);
    }

    #[test]
    fn quotes_around_words_are_punctuation() {
        assert_eq!(surfaces("'cheap' easy"), ["'", "cheap", "'", "easy"]);
        assert_eq!(surfaces("boys' toys"), ["boys", "'", "toys"]);
    }

    #[test]
    fn splice_drops_inner_gaps() {
        let seq = tokenize("The men  are duchesses !");
        assert_eq!(seq.splice(&[(3..5, "<mask>".into())]), "The men  are <mask>");
        assert_eq!(
            seq.splice(&[(0..1, "A".into()), (3..4, "dukes".into())]),
            "A men  are dukes !"
        );
    }

    proptest! {
        #[test]
        fn reassembly_is_lossless(s in "\\PC{0,40}") {
            prop_assert_eq!(tokenize(&s).reassemble(), s);
        }

        #[test]
        fn spans_are_monotone(s in "[a-zA-Z' ,.!]{0,40}") {
            let seq = tokenize(&s);
            for w in seq.tokens().windows(2) {
                prop_assert!(w[0].end <= w[1].start);
            }
            for t in seq.tokens() {
                prop_assert_eq!(&s[t.start..t.end], t.surface.as_str());
            }
        }
    }
}
