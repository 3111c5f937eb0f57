//! SQuAD v1.1 loading and answer alignment.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::tokenize::{char_slice, is_punct, tokenize, Token};
use crate::error::{Error, Result};
use crate::exec::Exec;

/// Answer span in passage token positions, 1-based and inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub begin: usize,
    pub end: usize,
}

impl Span {
    pub fn new(begin: usize, end: usize) -> Self {
        debug_assert!(1 <= begin && begin <= end);
        Span { begin, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.begin + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub question_text: String,
    pub question: Vec<Token>,
    pub context: Arc<str>,
    pub passage: Vec<Token>,
    /// Absent for unlabeled data and for answers that could not be aligned.
    pub answer: Option<Span>,
    pub gold_texts: Vec<String>,
}

impl Example {
    /// The original passage characters covered by tokens `span.begin..=span.end`.
    pub fn span_text(&self, span: Span) -> String {
        let s = self.passage[span.begin - 1].char_start;
        let e = self.passage[span.end - 1].char_end;
        char_slice(&self.context, s, e)
    }
}

/// Whether examples with unalignable answers are kept (for scoring) or dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unaligned {
    Drop,
    Keep,
}

#[derive(Debug, Clone)]
pub struct SquadSet {
    pub examples: Vec<Example>,
    /// Labeled examples whose answer could not be aligned to tokens.
    pub unaligned: usize,
}

/// Minimal token span covering the answer's character range, or `None` when
/// the answer cannot be placed on token boundaries.
pub fn align_answer_span(
    passage: &[Token],
    context: &str,
    answer_start: usize,
    answer_text: &str,
) -> Option<Span> {
    let chars: Vec<char> = context.chars().collect();
    let ans: Vec<char> = answer_text.chars().collect();
    let lead = ans.iter().take_while(|c| c.is_whitespace()).count();
    if lead == ans.len() {
        return None;
    }
    let trail = ans.iter().rev().take_while(|c| c.is_whitespace()).count();
    let ans = &ans[lead..ans.len() - trail];
    let s = answer_start + lead;
    let e = s + ans.len();
    if e > chars.len() {
        return None;
    }
    let first = passage.iter().position(|t| t.char_end > s)?;
    let last = passage.iter().rposition(|t| t.char_start < e)?;
    if first > last {
        return None;
    }
    let exact = passage[first].char_start == s && passage[last].char_end == e;
    if exact && &chars[s..e] == ans {
        return Some(Span::new(first + 1, last + 1));
    }
    let covering = &chars[passage[first].char_start..passage[last].char_end];
    if trim_edges(covering) == trim_edges(ans) {
        Some(Span::new(first + 1, last + 1))
    } else {
        None
    }
}

fn trim_edges(cs: &[char]) -> &[char] {
    let skip = |c: &char| c.is_whitespace() || is_punct(*c);
    let a = cs.iter().take_while(|c| skip(c)).count();
    let b = cs[a..].iter().rev().take_while(|c| skip(c)).count();
    &cs[a..cs.len() - b]
}

pub fn load_squad(path: impl AsRef<Path>, unaligned: Unaligned, exec: Exec) -> Result<SquadSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_squad(&text, &path.display().to_string(), unaligned, exec)
}

struct RawQa {
    id: String,
    question: String,
    answers: Vec<(String, usize)>,
}

struct RawParagraph {
    context: Arc<str>,
    qas: Vec<RawQa>,
}

pub fn parse_squad(text: &str, source: &str, unaligned: Unaligned, exec: Exec) -> Result<SquadSet> {
    let root: Value =
        serde_json::from_str(text).map_err(|e| Error::parse(source, e.to_string()))?;
    let paragraphs = collect_paragraphs(&root, source)?;

    let per_paragraph = exec.map(&paragraphs, |_, p| build_examples(p, unaligned));
    let mut examples = Vec::new();
    let mut dropped = 0;
    for (exs, d) in per_paragraph {
        examples.extend(exs);
        dropped += d;
    }
    if dropped > 0 {
        log::info!("{source}: {dropped} answers could not be aligned to tokens");
    }
    Ok(SquadSet {
        examples,
        unaligned: dropped,
    })
}

fn build_examples(p: &RawParagraph, unaligned: Unaligned) -> (Vec<Example>, usize) {
    let passage = tokenize(&p.context);
    let mut out = Vec::new();
    let mut dropped = 0;
    for qa in &p.qas {
        let answer = qa
            .answers
            .iter()
            .find_map(|(t, s)| align_answer_span(&passage, &p.context, *s, t));
        if answer.is_none() && !qa.answers.is_empty() {
            dropped += 1;
            if unaligned == Unaligned::Drop {
                continue;
            }
        }
        out.push(Example {
            id: qa.id.clone(),
            question_text: qa.question.clone(),
            question: tokenize(&qa.question),
            context: p.context.clone(),
            passage: passage.clone(),
            answer,
            gold_texts: qa.answers.iter().map(|(t, _)| t.clone()).collect(),
        });
    }
    (out, dropped)
}

fn field<'a>(v: &'a Value, key: &str, at: &str, source: &str) -> Result<&'a Value> {
    v.get(key)
        .ok_or_else(|| Error::parse(source, format!("missing key `{key}` at {at}")))
}

fn array<'a>(v: &'a Value, at: &str, source: &str) -> Result<&'a Vec<Value>> {
    v.as_array()
        .ok_or_else(|| Error::parse(source, format!("expected an array at {at}")))
}

fn string(v: &Value, at: &str, source: &str) -> Result<String> {
    v.as_str()
        .map(str::to_owned)
        .ok_or_else(|| Error::parse(source, format!("expected a string at {at}")))
}

fn collect_paragraphs(root: &Value, src: &str) -> Result<Vec<RawParagraph>> {
    let mut out = Vec::new();
    for (ai, article) in array(field(root, "data", "$", src)?, "$.data", src)?
        .iter()
        .enumerate()
    {
        let at = format!("$.data[{ai}]");
        let paras = field(article, "paragraphs", &at, src)?;
        for (pi, para) in array(paras, &format!("{at}.paragraphs"), src)?
            .iter()
            .enumerate()
        {
            let at = format!("$.data[{ai}].paragraphs[{pi}]");
            let context = string(
                field(para, "context", &at, src)?,
                &format!("{at}.context"),
                src,
            )?;
            let mut qas = Vec::new();
            for (qi, qa) in array(field(para, "qas", &at, src)?, &format!("{at}.qas"), src)?
                .iter()
                .enumerate()
            {
                let at = format!("{at}.qas[{qi}]");
                let id = match field(qa, "id", &at, src)? {
                    Value::String(s) => s.clone(),
                    Value::Number(n) => n.to_string(),
                    _ => return Err(Error::parse(src, format!("expected a string at {at}.id"))),
                };
                let question = string(
                    field(qa, "question", &at, src)?,
                    &format!("{at}.question"),
                    src,
                )?;
                let mut answers = Vec::new();
                if let Some(list) = qa.get("answers") {
                    for (xi, ans) in array(list, &format!("{at}.answers"), src)?
                        .iter()
                        .enumerate()
                    {
                        let at = format!("{at}.answers[{xi}]");
                        let text =
                            string(field(ans, "text", &at, src)?, &format!("{at}.text"), src)?;
                        let start =
                            field(ans, "answer_start", &at, src)?
                                .as_u64()
                                .ok_or_else(|| {
                                    Error::parse(
                                        src,
                                        format!(
                                            "expected a non-negative integer at {at}.answer_start"
                                        ),
                                    )
                                })?;
                        answers.push((text, start as usize));
                    }
                }
                qas.push(RawQa {
                    id,
                    question,
                    answers,
                });
            }
            out.push(RawParagraph {
                context: Arc::from(context.as_str()),
                qas,
            });
        }
    }
    Ok(out)
}

/// Serializable SQuAD v1.1 document, used when writing corpora.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SquadDocument {
    pub version: String,
    pub data: Vec<SquadArticle>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SquadArticle {
    pub title: String,
    pub paragraphs: Vec<SquadParagraph>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SquadParagraph {
    pub context: String,
    pub qas: Vec<SquadQa>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SquadQa {
    pub id: String,
    pub question: String,
    pub answers: Vec<SquadAnswer>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SquadAnswer {
    pub text: String,
    pub answer_start: usize,
}
