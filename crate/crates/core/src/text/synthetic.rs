//! Small generated reading-comprehension corpora in SQuAD format.
//!
//! Each passage lists facts of the form `Subject relation object .` and the
//! question asks `what does Subject relation ?`. Distractor facts share either
//! the subject or the relation with the target, so a single similarity score
//! per position is not enough to locate the answer.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::squad::{
    parse_squad, Example, SquadAnswer, SquadArticle, SquadDocument, SquadParagraph, SquadQa,
    Unaligned,
};
use crate::error::Result;
use crate::exec::Exec;

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "kr",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub examples: usize,
    pub subjects: usize,
    pub relations: usize,
    pub objects: usize,
    /// Facts per passage, target included.
    pub facts: usize,
    /// Probability that an object has a second word.
    pub two_word_objects: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            examples: 1000,
            subjects: 40,
            relations: 12,
            objects: 60,
            facts: 6,
            two_word_objects: 0.3,
        }
    }
}

/// Distinct pronounceable words, deterministic in `seed`.
fn lexicon(count: usize, rng: &mut ChaCha8Rng, taken: &mut HashSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let syllables = rng.random_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(rng).unwrap());
            w.push_str(VOWELS.choose(rng).unwrap());
        }
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn capitalize(w: &str) -> String {
    let mut cs = w.chars();
    match cs.next() {
        Some(c) => c.to_uppercase().chain(cs).collect(),
        None => String::new(),
    }
}

struct Lexicon {
    subjects: Vec<String>,
    relations: Vec<String>,
    objects: Vec<String>,
    modifiers: Vec<String>,
}

impl Lexicon {
    fn new(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut taken = HashSet::new();
        Lexicon {
            subjects: lexicon(cfg.subjects, rng, &mut taken)
                .iter()
                .map(|w| capitalize(w))
                .collect(),
            relations: lexicon(cfg.relations, rng, &mut taken),
            objects: lexicon(cfg.objects, rng, &mut taken),
            modifiers: lexicon(cfg.objects.div_ceil(4).max(1), rng, &mut taken),
        }
    }

    fn object(&self, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> String {
        let noun = self.objects.choose(rng).unwrap();
        if rng.random_bool(cfg.two_word_objects) {
            format!("{} {noun}", self.modifiers.choose(rng).unwrap())
        } else {
            noun.clone()
        }
    }
}

/// Generates a corpus; identical inputs give an identical document.
pub fn synthetic_document(cfg: &SynthConfig, seed: u64) -> SquadDocument {
    assert!(cfg.subjects >= 2 && cfg.relations >= 2 && cfg.objects >= 1 && cfg.facts >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lex = Lexicon::new(cfg, &mut rng);
    let mut paragraphs = Vec::with_capacity(cfg.examples);
    for i in 0..cfg.examples {
        let target = (
            rng.random_range(0..cfg.subjects),
            rng.random_range(0..cfg.relations),
        );
        let mut pairs = vec![target];
        let mut guard = 0;
        while pairs.len() < cfg.facts && guard < 1000 {
            guard += 1;
            let pair = match rng.random_range(0..3) {
                0 => (target.0, rng.random_range(0..cfg.relations)),
                1 => (rng.random_range(0..cfg.subjects), target.1),
                _ => (
                    rng.random_range(0..cfg.subjects),
                    rng.random_range(0..cfg.relations),
                ),
            };
            if !pairs.contains(&pair) {
                pairs.push(pair);
            }
        }
        pairs.shuffle(&mut rng);

        let mut context = String::new();
        let mut answer = None;
        for &(s, r) in &pairs {
            let obj = lex.object(cfg, &mut rng);
            if !context.is_empty() {
                context.push(' ');
            }
            write!(context, "{} {} ", lex.subjects[s], lex.relations[r]).unwrap();
            if (s, r) == target {
                answer = Some(SquadAnswer {
                    text: obj.clone(),
                    answer_start: context.chars().count(),
                });
            }
            write!(context, "{obj} .").unwrap();
        }
        paragraphs.push(SquadParagraph {
            context,
            qas: vec![SquadQa {
                id: format!("synth-{seed}-{i}"),
                question: format!(
                    "what does {} {} ?",
                    lex.subjects[target.0], lex.relations[target.1]
                ),
                answers: vec![answer.expect("target fact is always written")],
            }],
        });
    }
    SquadDocument {
        version: "1.1".into(),
        data: vec![SquadArticle {
            title: format!("synthetic-{seed}"),
            paragraphs,
        }],
    }
}

/// Generates and tokenizes a corpus.
pub fn synthetic_examples(cfg: &SynthConfig, seed: u64) -> Result<Vec<Example>> {
    let doc = synthetic_document(cfg, seed);
    let json = serde_json::to_string(&doc).expect("document serializes");
    Ok(parse_squad(&json, "synthetic", Unaligned::Drop, Exec::Sequential)?.examples)
}

/// GloVe-format text with one random vector per distinct lowercased token.
pub fn synthetic_embeddings<'a>(
    examples: impl IntoIterator<Item = &'a Example>,
    dim: usize,
    seed: u64,
) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = String::new();
    for e in examples {
        for t in e.question.iter().chain(&e.passage) {
            let w = t.text.to_lowercase();
            if !seen.insert(w.clone()) {
                continue;
            }
            out.push_str(&w);
            for _ in 0..dim {
                write!(out, " {:.6}", rng.random_range(-1.0..1.0f64)).unwrap();
            }
            out.push('\n');
        }
    }
    out
}
