//! Corpus scores with answer-length and question-type breakdowns.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::text::tokenize;

/// Question types, two-word forms first so they win over their first word.
pub const QUESTION_TYPES: [&str; 13] = [
    "what year",
    "in what",
    "in which",
    "how did",
    "how many",
    "what",
    "how",
    "who",
    "when",
    "which",
    "where",
    "why",
    "other",
];

pub const LENGTH_BUCKETS: [&str; 10] = ["1", "2", "3", "4", "5", "6", "7", "8", "9", "10+"];

/// Lowercased first one or two question tokens mapped onto [`QUESTION_TYPES`].
pub fn question_type(question: &str) -> &'static str {
    let toks: Vec<String> = tokenize(question)
        .into_iter()
        .take(2)
        .map(|t| t.text.to_lowercase())
        .collect();
    let two = toks.join(" ");
    let one = toks.first().map(String::as_str).unwrap_or("");
    QUESTION_TYPES[..12]
        .iter()
        .find(|&&t| {
            if t.contains(' ') {
                toks.len() == 2 && t == two
            } else {
                t == one
            }
        })
        .copied()
        .unwrap_or("other")
}

/// Bucket index for an answer of `tokens` tokens (empty answers count as 1).
pub fn length_bucket(tokens: usize) -> usize {
    tokens.clamp(1, 10) - 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub label: String,
    pub count: usize,
    /// Percentages; `None` for empty buckets.
    pub em: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: usize,
    /// Examples without gold answers, predicted but not scored.
    pub skipped: usize,
    pub exact_match: f64,
    pub f1: f64,
    pub by_answer_length: Vec<Bucket>,
    pub by_question_type: Vec<Bucket>,
}

/// One scored question.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored<'a> {
    pub question: &'a str,
    pub gold_tokens: usize,
    pub em: f64,
    pub f1: f64,
}

#[derive(Default, Clone, Copy)]
struct Sums {
    count: usize,
    em: f64,
    f1: f64,
}

impl Sums {
    fn add(&mut self, em: f64, f1: f64) {
        self.count += 1;
        self.em += em;
        self.f1 += f1;
    }

    fn bucket(&self, label: &str) -> Bucket {
        let pct = |s: f64| (self.count > 0).then(|| 100.0 * s / self.count as f64);
        Bucket {
            label: label.to_owned(),
            count: self.count,
            em: pct(self.em),
            f1: pct(self.f1),
        }
    }
}

impl EvalReport {
    pub fn from_scores(scores: &[Scored], skipped: usize) -> EvalReport {
        let mut all = Sums::default();
        let mut lengths = [Sums::default(); 10];
        let mut types = [Sums::default(); 13];
        for s in scores {
            all.add(s.em, s.f1);
            lengths[length_bucket(s.gold_tokens)].add(s.em, s.f1);
            let t = question_type(s.question);
            let ti = QUESTION_TYPES
                .iter()
                .position(|&q| q == t)
                .expect("known type");
            types[ti].add(s.em, s.f1);
        }
        let overall = all.bucket("all");
        EvalReport {
            total: scores.len(),
            skipped,
            exact_match: overall.em.unwrap_or(0.0),
            f1: overall.f1.unwrap_or(0.0),
            by_answer_length: lengths
                .iter()
                .zip(LENGTH_BUCKETS)
                .map(|(s, l)| s.bucket(l))
                .collect(),
            by_question_type: types
                .iter()
                .zip(QUESTION_TYPES)
                .map(|(s, l)| s.bucket(l))
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn write_buckets(f: &mut fmt::Formatter<'_>, title: &str, buckets: &[Bucket]) -> fmt::Result {
    writeln!(f, "{title:<12} {:>7} {:>8} {:>8}", "count", "EM", "F1")?;
    for b in buckets.iter().filter(|b| b.count > 0) {
        writeln!(
            f,
            "{:<12} {:>7} {:>8.2} {:>8.2}",
            b.label,
            b.count,
            b.em.unwrap_or(0.0),
            b.f1.unwrap_or(0.0)
        )?;
    }
    Ok(())
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "questions {}  (skipped {})", self.total, self.skipped)?;
        writeln!(f, "EM {:.2}  F1 {:.2}", self.exact_match, self.f1)?;
        writeln!(f)?;
        write_buckets(f, "answer len", &self.by_answer_length)?;
        writeln!(f)?;
        write_buckets(f, "question", &self.by_question_type)
    }
}
