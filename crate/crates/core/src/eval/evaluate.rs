//! Decoding and scoring whole datasets.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::decode::decode_span;
use super::metrics::{exact_match, f1_score};
use super::report::{EvalReport, Scored};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{BoundaryDistributions, Mode, Model};
use crate::tensor::Real;
use crate::text::{tokenize, EncodedExample, Encoder, Example};

/// Anything that yields boundary distributions: a model or an ensemble.
pub trait SpanScorer: Sync {
    fn encoder(&self) -> Encoder<'_>;
    fn distributions(&self, ex: &EncodedExample) -> Result<BoundaryDistributions>;
}

impl SpanScorer for Model {
    fn encoder(&self) -> Encoder<'_> {
        Model::encoder(self)
    }

    fn distributions(&self, ex: &EncodedExample) -> Result<BoundaryDistributions> {
        self.forward(ex, Mode::Inference)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalOptions {
    pub max_span_len: Option<usize>,
    pub exec: Exec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanPrediction {
    pub id: String,
    pub begin: usize,
    pub end: usize,
    /// Original passage characters covered by the span.
    pub answer: String,
    /// `p_begin[begin] · p_end[end]`.
    pub probability: Real,
}

/// Per-position probabilities of one example, for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityDump {
    pub id: String,
    pub tokens: Vec<String>,
    pub p_begin: Vec<Real>,
    pub p_end: Vec<Real>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    pub predictions: Vec<SpanPrediction>,
    pub distributions: Vec<BoundaryDistributions>,
}

impl Evaluation {
    /// `{question_id: answer}`.
    pub fn answers(&self) -> BTreeMap<String, String> {
        answers(&self.predictions)
    }

    pub fn probability_dumps(&self, examples: &[Example]) -> Vec<ProbabilityDump> {
        probability_dumps(examples, &self.distributions)
    }
}

pub fn probability_dumps(
    examples: &[Example],
    distributions: &[BoundaryDistributions],
) -> Vec<ProbabilityDump> {
    examples
        .iter()
        .zip(distributions)
        .map(|(ex, d)| ProbabilityDump {
            id: ex.id.clone(),
            tokens: ex.passage.iter().map(|t| t.text.clone()).collect(),
            p_begin: d.p_begin.clone(),
            p_end: d.p_end.clone(),
        })
        .collect()
}

pub fn answers(predictions: &[SpanPrediction]) -> BTreeMap<String, String> {
    predictions
        .iter()
        .map(|p| (p.id.clone(), p.answer.clone()))
        .collect()
}

/// Decodes every example without scoring.
pub fn predict(
    scorer: &impl SpanScorer,
    examples: &[Example],
    opts: EvalOptions,
) -> Result<(Vec<SpanPrediction>, Vec<BoundaryDistributions>)> {
    let enc = scorer.encoder();
    let out = opts.exec.try_map(examples, |_, ex| {
        let d = scorer.distributions(&enc.encode(ex))?;
        let (span, probability) = decode_span(&d, opts.max_span_len)
            .ok_or_else(|| Error::invalid(format!("example {} has an empty passage", ex.id)))?;
        let pred = SpanPrediction {
            id: ex.id.clone(),
            begin: span.begin,
            end: span.end,
            answer: ex.span_text(span),
            probability,
        };
        Ok((pred, d))
    })?;
    Ok(out.into_iter().unzip())
}

/// Decodes and scores. Examples without gold answers are predicted but
/// counted as skipped.
pub fn evaluate(
    scorer: &impl SpanScorer,
    examples: &[Example],
    opts: EvalOptions,
) -> Result<Evaluation> {
    let (predictions, distributions) = predict(scorer, examples, opts)?;
    let mut scores = Vec::with_capacity(examples.len());
    let mut skipped = 0;
    for (ex, p) in examples.iter().zip(&predictions) {
        if ex.gold_texts.is_empty() {
            skipped += 1;
            continue;
        }
        scores.push(Scored {
            question: &ex.question_text,
            gold_tokens: tokenize(&ex.gold_texts[0]).len(),
            em: exact_match(&p.answer, &ex.gold_texts)?,
            f1: f1_score(&p.answer, &ex.gold_texts)?,
        });
    }
    if skipped > 0 {
        log::warn!("{skipped} examples without gold answers were not scored");
    }
    Ok(Evaluation {
        report: EvalReport::from_scores(&scores, skipped),
        predictions,
        distributions,
    })
}

pub fn write_answers(out: impl Write, predictions: &[SpanPrediction]) -> std::io::Result<()> {
    serde_json::to_writer_pretty(out, &answers(predictions))?;
    Ok(())
}

/// One JSON object per line.
pub fn write_probability_dumps(
    mut out: impl Write,
    dumps: &[ProbabilityDump],
) -> std::io::Result<()> {
    for d in dumps {
        serde_json::to_writer(&mut out, d)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
