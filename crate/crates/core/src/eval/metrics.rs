//! SQuAD-style answer normalization, exact match and token F1.

use std::collections::HashMap;
use std::sync::LazyLock;

use regex::Regex;

use crate::error::{Error, Result};

static ARTICLES: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(a|an|the)\b").expect("valid pattern"));

/// Lowercase, drop ASCII punctuation, drop the articles a/an/the, and
/// collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lower: String = s
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    let no_articles = ARTICLES.replace_all(&lower, " ");
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn check_golds(golds: &[impl AsRef<str>]) -> Result<()> {
    if golds.is_empty() {
        Err(Error::invalid("scoring needs at least one gold answer"))
    } else {
        Ok(())
    }
}

pub fn exact_match(pred: &str, golds: &[impl AsRef<str>]) -> Result<f64> {
    check_golds(golds)?;
    let p = normalize_answer(pred);
    Ok(if golds.iter().any(|g| normalize_answer(g.as_ref()) == p) {
        1.0
    } else {
        0.0
    })
}

fn token_f1(pred: &str, gold: &str) -> f64 {
    let p = normalize_answer(pred);
    let g = normalize_answer(gold);
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    if pt.is_empty() || gt.is_empty() {
        return if pt.is_empty() && gt.is_empty() {
            1.0
        } else {
            0.0
        };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gt {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0;
    for t in &pt {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pt.len() as f64;
    let recall = overlap as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Best token-bag F1 against any gold.
pub fn f1_score(pred: &str, golds: &[impl AsRef<str>]) -> Result<f64> {
    check_golds(golds)?;
    Ok(golds
        .iter()
        .map(|g| token_f1(pred, g.as_ref()))
        .fold(0.0, f64::max))
}
