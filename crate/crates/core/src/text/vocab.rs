use std::collections::HashMap;

use super::squad::Example;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

/// Lowercased word vocabulary. Index 0 is padding, index 1 unknown; the rest
/// follow first occurrence in the corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(Vec::<String>::new())
    }
}

impl Vocabulary {
    /// Builds from tokens in order; duplicates are ignored.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Vocabulary {
            index: HashMap::new(),
            tokens: Vec::new(),
        };
        v.insert(PAD_TOKEN);
        v.insert(UNK_TOKEN);
        for t in tokens {
            v.insert(&t.as_ref().to_lowercase());
        }
        v
    }

    /// Restores a vocabulary from its full index→token list (specials included).
    pub fn from_index_list(tokens: Vec<String>) -> Option<Self> {
        if tokens.len() < 2 || tokens[PAD] != PAD_TOKEN || tokens[UNK] != UNK_TOKEN {
            return None;
        }
        let index: HashMap<String, usize> = tokens
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, t)| (t, i))
            .collect();
        (index.len() == tokens.len()).then_some(Vocabulary { index, tokens })
    }

    pub fn from_examples<'a>(examples: impl IntoIterator<Item = &'a Example>) -> Self {
        Self::from_tokens(examples.into_iter().flat_map(|e| {
            e.question
                .iter()
                .chain(e.passage.iter())
                .map(|t| t.text.as_str())
        }))
    }

    fn insert(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.tokens.len();
        self.tokens.push(token.to_owned());
        self.index.insert(token.to_owned(), i);
        i
    }

    /// Index of the lowercased word, or [`UNK`].
    pub fn lookup(&self, word: &str) -> usize {
        self.index
            .get(word)
            .or_else(|| self.index.get(&word.to_lowercase()))
            .copied()
            .unwrap_or(UNK)
    }

    pub fn get(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }
}

/// Case-preserving character inventory for the character-composed embeddings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharVocabulary {
    index: HashMap<char, usize>,
    chars: Vec<char>,
}

impl CharVocabulary {
    pub fn from_examples<'a>(examples: impl IntoIterator<Item = &'a Example>) -> Self {
        let mut seen = Vec::new();
        let mut index = HashMap::new();
        for e in examples {
            for t in e.question.iter().chain(e.passage.iter()) {
                for c in t.text.chars() {
                    index.entry(c).or_insert_with(|| {
                        seen.push(c);
                        seen.len() + 1
                    });
                }
            }
        }
        CharVocabulary { index, chars: seen }
    }

    /// Restores from the ordered non-special characters.
    pub fn from_chars(chars: Vec<char>) -> Option<Self> {
        let index: HashMap<char, usize> =
            chars.iter().enumerate().map(|(i, &c)| (c, i + 2)).collect();
        (index.len() == chars.len()).then_some(CharVocabulary { index, chars })
    }

    pub fn lookup(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(UNK)
    }

    /// Characters in index order, excluding the two specials.
    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// Table size including padding and unknown.
    pub fn len(&self) -> usize {
        self.chars.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }
}
