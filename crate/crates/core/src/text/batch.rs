//! Index encoding and length-bucketed, padded batches.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::squad::{Example, Span};
use super::tokenize::Token;
use super::vocab::{CharVocabulary, Vocabulary, PAD};

/// Longer tokens are cut to this many characters before the character LSTM.
pub const MAX_WORD_CHARS: usize = 30;

/// Number of batches drawn together and sorted by passage length.
const BUCKET_BATCHES: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedExample {
    pub id: String,
    pub question_words: Vec<usize>,
    pub question_chars: Vec<Vec<usize>>,
    pub passage_words: Vec<usize>,
    pub passage_chars: Vec<Vec<usize>>,
    pub answer: Option<Span>,
}

impl EncodedExample {
    pub fn passage_len(&self) -> usize {
        self.passage_words.len()
    }

    pub fn question_len(&self) -> usize {
        self.question_words.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Encoder<'a> {
    pub vocab: &'a Vocabulary,
    pub chars: &'a CharVocabulary,
}

impl<'a> Encoder<'a> {
    pub fn new(vocab: &'a Vocabulary, chars: &'a CharVocabulary) -> Self {
        Encoder { vocab, chars }
    }

    fn words(&self, tokens: &[Token]) -> Vec<usize> {
        tokens.iter().map(|t| self.vocab.lookup(&t.text)).collect()
    }

    fn char_ids(&self, tokens: &[Token]) -> Vec<Vec<usize>> {
        tokens
            .iter()
            .map(|t| {
                t.text
                    .chars()
                    .take(MAX_WORD_CHARS)
                    .map(|c| self.chars.lookup(c))
                    .collect()
            })
            .collect()
    }

    pub fn encode(&self, ex: &Example) -> EncodedExample {
        EncodedExample {
            id: ex.id.clone(),
            question_words: self.words(&ex.question),
            question_chars: self.char_ids(&ex.question),
            passage_words: self.words(&ex.passage),
            passage_chars: self.char_ids(&ex.passage),
            answer: ex.answer,
        }
    }

    /// Encoding for training: the passage is cut to `max_passage_len` tokens
    /// and the example is discarded if its answer no longer fits. Examples
    /// without an aligned answer or with an empty question are discarded too.
    pub fn encode_for_training(
        &self,
        ex: &Example,
        max_passage_len: usize,
    ) -> Option<EncodedExample> {
        let span = ex.answer?;
        if span.end > max_passage_len || ex.question.is_empty() {
            return None;
        }
        let mut enc = self.encode(ex);
        enc.passage_words.truncate(max_passage_len);
        enc.passage_chars.truncate(max_passage_len);
        Some(enc)
    }
}

/// Padded batch. Matrices are row-major; character tensors are
/// `batch × positions × max_chars` and padded with [`PAD`].
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub ids: Vec<String>,
    pub question_len: usize,
    pub passage_len: usize,
    pub word_len: usize,
    pub question_words: Vec<usize>,
    pub passage_words: Vec<usize>,
    pub question_chars: Vec<usize>,
    pub passage_chars: Vec<usize>,
    pub question_mask: Vec<bool>,
    pub passage_mask: Vec<bool>,
    pub answer_begin: Vec<Option<usize>>,
    pub answer_end: Vec<Option<usize>>,
}

impl Batch {
    pub fn from_examples(examples: &[&EncodedExample]) -> Batch {
        let b = examples.len();
        let m = examples.iter().map(|e| e.question_len()).max().unwrap_or(0);
        let n = examples.iter().map(|e| e.passage_len()).max().unwrap_or(0);
        let c = examples
            .iter()
            .flat_map(|e| e.question_chars.iter().chain(&e.passage_chars))
            .map(Vec::len)
            .max()
            .unwrap_or(0);
        let mut batch = Batch {
            ids: examples.iter().map(|e| e.id.clone()).collect(),
            question_len: m,
            passage_len: n,
            word_len: c,
            question_words: vec![PAD; b * m],
            passage_words: vec![PAD; b * n],
            question_chars: vec![PAD; b * m * c],
            passage_chars: vec![PAD; b * n * c],
            question_mask: vec![false; b * m],
            passage_mask: vec![false; b * n],
            answer_begin: examples.iter().map(|e| e.answer.map(|s| s.begin)).collect(),
            answer_end: examples.iter().map(|e| e.answer.map(|s| s.end)).collect(),
        };
        for (r, e) in examples.iter().enumerate() {
            fill(
                &mut batch.question_words,
                &mut batch.question_mask,
                &mut batch.question_chars,
                r,
                m,
                c,
                &e.question_words,
                &e.question_chars,
            );
            fill(
                &mut batch.passage_words,
                &mut batch.passage_mask,
                &mut batch.passage_chars,
                r,
                n,
                c,
                &e.passage_words,
                &e.passage_chars,
            );
        }
        batch
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Recovers row `r` from its unmasked positions.
    pub fn example(&self, r: usize) -> EncodedExample {
        let (m, n, c) = (self.question_len, self.passage_len, self.word_len);
        let unpack = |words: &[usize], mask: &[bool], chars: &[usize], len: usize| {
            let mut ws = Vec::new();
            let mut cs = Vec::new();
            for p in 0..len {
                if !mask[r * len + p] {
                    continue;
                }
                ws.push(words[r * len + p]);
                let base = (r * len + p) * c;
                cs.push(
                    chars[base..base + c]
                        .iter()
                        .copied()
                        .take_while(|&x| x != PAD)
                        .collect(),
                );
            }
            (ws, cs)
        };
        let (question_words, question_chars) = unpack(
            &self.question_words,
            &self.question_mask,
            &self.question_chars,
            m,
        );
        let (passage_words, passage_chars) = unpack(
            &self.passage_words,
            &self.passage_mask,
            &self.passage_chars,
            n,
        );
        EncodedExample {
            id: self.ids[r].clone(),
            question_words,
            question_chars,
            passage_words,
            passage_chars,
            answer: match (self.answer_begin[r], self.answer_end[r]) {
                (Some(b), Some(e)) => Some(Span::new(b, e)),
                _ => None,
            },
        }
    }

    pub fn examples(&self) -> Vec<EncodedExample> {
        (0..self.len()).map(|r| self.example(r)).collect()
    }
}

#[allow(clippy::too_many_arguments)]
fn fill(
    words: &mut [usize],
    mask: &mut [bool],
    chars: &mut [usize],
    row: usize,
    len: usize,
    c: usize,
    src_words: &[usize],
    src_chars: &[Vec<usize>],
) {
    for (p, (&w, cs)) in src_words.iter().zip(src_chars).enumerate() {
        words[row * len + p] = w;
        mask[row * len + p] = true;
        let base = (row * len + p) * c;
        chars[base..base + cs.len()].copy_from_slice(cs);
    }
}

/// Shuffles, groups examples of similar passage length, and returns batches in
/// a seeded random order. Deterministic for a fixed seed.
pub fn make_batches(examples: &[EncodedExample], batch_size: usize, seed: u64) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch_size must be positive");
    batch_indices(examples, batch_size, seed)
        .into_iter()
        .map(|idx| Batch::from_examples(&idx.iter().map(|&i| &examples[i]).collect::<Vec<_>>()))
        .collect()
}

/// Index lists behind [`make_batches`].
pub fn batch_indices(examples: &[EncodedExample], batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng);
    let mut batches = Vec::new();
    for pool in order.chunks(batch_size * BUCKET_BATCHES) {
        let mut pool = pool.to_vec();
        pool.sort_by_key(|&i| examples[i].passage_len());
        batches.extend(pool.chunks(batch_size).map(<[usize]>::to_vec));
    }
    batches.shuffle(&mut rng);
    batches
}
