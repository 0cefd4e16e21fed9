//! Token primitives and the rule-based word/punctuation tokenizer.
//!
//! Every maximal run of letters or digits becomes one token. An apostrophe or
//! hyphen stays inside a word when it sits between two word characters
//! (`don't`, `well-known`). Any other non-whitespace character is a token of
//! its own, and whitespace produces nothing.

use serde::{Deserialize, Serialize};

/// One token of a [`TokenSequence`].
///
/// Offsets are counted in Unicode scalar values, not bytes, and are half-open.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
    pub index: usize,
}

/// The tokens of a text together with the text itself.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TokenSequence {
    source_text: String,
    tokens: Vec<Token>,
    // byte spans parallel to `tokens`, used for gap reconstruction
    byte_spans: Vec<(usize, usize)>,
}

impl TokenSequence {
    pub fn source_text(&self) -> &str {
        &self.source_text
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Token> {
        self.tokens.get(index)
    }

    /// Token texts in order.
    pub fn texts(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    /// The `len() + 1` stretches of source text around the tokens: before the
    /// first token, between each consecutive pair, and after the last one.
    pub fn gaps(&self) -> Vec<&str> {
        let mut out = Vec::with_capacity(self.tokens.len() + 1);
        let mut cursor = 0;
        for &(start, end) in &self.byte_spans {
            out.push(&self.source_text[cursor..start]);
            cursor = end;
        }
        out.push(&self.source_text[cursor..]);
        out
    }

    /// Rebuilds the source text from tokens and gaps.
    pub fn reconstruct(&self) -> String {
        let gaps = self.gaps();
        let mut out = String::with_capacity(self.source_text.len());
        for (gap, token) in gaps.iter().zip(&self.tokens) {
            out.push_str(gap);
            out.push_str(&token.text);
        }
        out.push_str(gaps[gaps.len() - 1]);
        out
    }
}

/// An `<original, generated>` pair, both produced by [`tokenize`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextPair {
    pub original: TokenSequence,
    pub generated: TokenSequence,
}

impl TextPair {
    pub fn new(original: &str, generated: &str) -> Self {
        Self {
            original: tokenize(original),
            generated: tokenize(generated),
        }
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

fn is_joiner(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '-' | '\u{2010}')
}

/// Splits `text` into word and punctuation tokens.
pub fn tokenize(text: &str) -> TokenSequence {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let byte_at = |ci: usize| chars.get(ci).map_or(text.len(), |&(b, _)| b);

    let mut tokens = Vec::new();
    let mut byte_spans = Vec::new();
    let mut push = |start: usize, end: usize| {
        let (bs, be) = (byte_at(start), byte_at(end));
        byte_spans.push((bs, be));
        tokens.push(Token {
            text: text[bs..be].to_string(),
            char_start: start,
            char_end: end,
            index: tokens.len(),
        });
    };

    let mut i = 0;
    while i < chars.len() {
        let c = chars[i].1;
        if c.is_whitespace() {
            i += 1;
        } else if is_word_char(c) {
            let start = i;
            i += 1;
            loop {
                match chars.get(i) {
                    Some(&(_, c)) if is_word_char(c) => i += 1,
                    Some(&(_, c))
                        if is_joiner(c)
                            && chars.get(i + 1).is_some_and(|&(_, n)| is_word_char(n)) =>
                    {
                        i += 2
                    }
                    _ => break,
                }
            }
            push(start, i);
        } else {
            push(i, i + 1);
            i += 1;
        }
    }

    TokenSequence {
        source_text: text.to_string(),
        tokens,
        byte_spans,
    }
}
