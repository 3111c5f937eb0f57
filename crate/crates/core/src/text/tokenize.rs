//! Rule-based tokenizer with exact character offsets.
//!
//! Rules, applied to each whitespace-delimited chunk:
//! 1. every leading punctuation character becomes its own token;
//! 2. every trailing punctuation character becomes its own token;
//! 3. the remaining core is split on internal hyphens, each hyphen kept as a token.
//!
//! A character is punctuation when it is neither alphanumeric nor whitespace.
//! Offsets count Unicode scalar values, matching SQuAD's `answer_start`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// Inclusive start, in characters.
    pub char_start: usize,
    /// Exclusive end, in characters.
    pub char_end: usize,
}

pub fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        split_chunk(&chars, start, i, &mut tokens);
    }
    tokens
}

fn push(chars: &[char], s: usize, e: usize, out: &mut Vec<Token>) {
    out.push(Token {
        text: chars[s..e].iter().collect(),
        char_start: s,
        char_end: e,
    });
}

fn split_chunk(chars: &[char], mut s: usize, e: usize, out: &mut Vec<Token>) {
    while s < e && is_punct(chars[s]) {
        push(chars, s, s + 1, out);
        s += 1;
    }
    let mut core_end = e;
    while core_end > s && is_punct(chars[core_end - 1]) {
        core_end -= 1;
    }
    let mut piece = s;
    for k in s..core_end {
        if chars[k] == '-' {
            if piece < k {
                push(chars, piece, k, out);
            }
            push(chars, k, k + 1, out);
            piece = k + 1;
        }
    }
    if piece < core_end {
        push(chars, piece, core_end, out);
    }
    for k in core_end..e {
        push(chars, k, k + 1, out);
    }
}

/// Characters `[start, end)` of `text`, by character index.
pub fn char_slice(text: &str, start: usize, end: usize) -> String {
    text.chars()
        .skip(start)
        .take(end.saturating_sub(start))
        .collect()
}
