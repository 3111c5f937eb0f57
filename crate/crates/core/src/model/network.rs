use super::config::ModelConfig;
use super::dropout::{self, DropoutKey, Site};
use super::layers::{self, ensure_finite, Bound, Encoded};
use super::params::{ModelParams, ParamSet};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::tensor::{Graph, Real, Tensor, Var};
use crate::text::{
    Batch, CharVocabulary, EmbeddingMatrix, EncodedExample, Encoder, Span, Vocabulary,
};

/// Probabilities below this are clamped before taking logs.
pub const LOG_FLOOR: Real = 1e-12;

/// Per-position begin and end probabilities for one passage.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryDistributions {
    pub p_begin: Vec<Real>,
    pub p_end: Vec<Real>,
}

impl BoundaryDistributions {
    pub fn len(&self) -> usize {
        self.p_begin.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_begin.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Inference,
    /// Dropout active, masks keyed by the given run seed and step.
    Training(DropoutKey),
}

/// Handles to the intermediate values of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Trace {
    pub question_reps: Var,
    pub passage_reps: Var,
    pub relevancy: Option<Var>,
    pub question: Encoded,
    pub passage: Encoded,
    pub matching: Var,
    pub aggregated: Var,
    pub p_begin: Var,
    pub p_end: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub chars: CharVocabulary,
}

struct Dropout {
    key: Option<DropoutKey>,
    example: u64,
    rate: f64,
}

impl Dropout {
    fn apply(&self, g: &mut Graph, v: Var, site: Site) -> Result<Var> {
        match self.key {
            Some(key) if self.rate > 0.0 => {
                let len = g.value(v).len();
                g.mul_const(v, dropout::mask(key, self.example, site, len, self.rate))
            }
            _ => Ok(v),
        }
    }
}

impl Model {
    pub fn new(
        config: ModelConfig,
        embeddings: EmbeddingMatrix,
        vocab: Vocabulary,
        chars: CharVocabulary,
        seed: u64,
    ) -> Result<Model> {
        if embeddings.rows() != vocab.len() {
            return Err(Error::Config(format!(
                "embedding table has {} rows for a vocabulary of {}",
                embeddings.rows(),
                vocab.len()
            )));
        }
        let params = ModelParams::init(&config, embeddings, chars.len(), seed)?;
        Ok(Model {
            config,
            params,
            vocab,
            chars,
        })
    }

    pub fn encoder(&self) -> Encoder<'_> {
        Encoder::new(&self.vocab, &self.chars)
    }

    /// Records the full network for `ex` on `g`.
    pub fn trace<'p>(
        &'p self,
        g: &mut Graph<'p>,
        bound: &Bound<'p>,
        ex: &EncodedExample,
        mode: Mode,
    ) -> Result<Trace> {
        let (m, n) = (ex.question_len(), ex.passage_len());
        if m == 0 || n == 0 {
            return Err(Error::invalid(format!(
                "example {} has an empty question or passage",
                ex.id
            )));
        }
        if ex.question_chars.len() != m || ex.passage_chars.len() != n {
            return Err(Error::invalid(format!(
                "example {} has mismatched character rows",
                ex.id
            )));
        }
        let cfg = &self.config;
        let drop = Dropout {
            key: match mode {
                Mode::Inference => None,
                Mode::Training(k) => Some(k),
            },
            example: dropout::id_hash(&ex.id),
            rate: cfg.dropout_rate,
        };
        let q_mask = vec![true; m];
        let p_mask = vec![true; n];

        let embedding = g.frozen(&self.params.embeddings.matrix);
        let [q, p] = layers::word_representation(
            g,
            bound,
            cfg,
            embedding,
            [
                (&ex.question_words, &ex.question_chars),
                (&ex.passage_words, &ex.passage_chars),
            ],
        )?;
        ensure_finite(g, p, "word representation")?;
        let q = drop.apply(g, q, Site::QuestionWords)?;
        let p = drop.apply(g, p, Site::PassageWords)?;

        let (p_filtered, relevancy) = if cfg.use_filter {
            let r = layers::relevancy(g, q, p, &q_mask)?;
            (layers::filter_passage(g, p, r)?, Some(r))
        } else {
            (p, None)
        };

        let (qf, qb) = layers::context_encode(g, bound, q)?;
        let (pf, pb) = layers::context_encode(g, bound, p_filtered)?;
        let question = Encoded {
            forward: drop.apply(g, qf, Site::QuestionForward)?,
            backward: drop.apply(g, qb, Site::QuestionBackward)?,
        };
        let passage = Encoded {
            forward: drop.apply(g, pf, Site::PassageForward)?,
            backward: drop.apply(g, pb, Site::PassageBackward)?,
        };

        let matching = layers::match_passage(g, bound, cfg, question, passage, &q_mask)?;
        ensure_finite(g, matching, "matching")?;
        let matching_in = drop.apply(g, matching, Site::Matching)?;

        let aggregated = layers::aggregate(g, bound, cfg, matching_in)?;
        ensure_finite(g, aggregated, "aggregation")?;
        let aggregated_out = drop.apply(g, aggregated, Site::Aggregation)?;

        let (p_begin, p_end) = layers::predict_boundaries(g, bound, aggregated_out, &p_mask)?;
        ensure_finite(g, p_begin, "prediction")?;
        ensure_finite(g, p_end, "prediction")?;
        Ok(Trace {
            question_reps: q,
            passage_reps: p,
            relevancy,
            question,
            passage,
            matching,
            aggregated,
            p_begin,
            p_end,
        })
    }

    pub fn forward(&self, ex: &EncodedExample, mode: Mode) -> Result<BoundaryDistributions> {
        let mut g = Graph::new();
        let bound = Bound::bind(&mut g, &self.params.trainable);
        let t = self.trace(&mut g, &bound, ex, mode)?;
        Ok(BoundaryDistributions {
            p_begin: g.value(t.p_begin).data().to_vec(),
            p_end: g.value(t.p_end).data().to_vec(),
        })
    }

    /// Forward over every row of a padded batch; each row is trimmed by its
    /// masks, so results equal single-example calls.
    pub fn forward_batch(
        &self,
        batch: &Batch,
        mode: Mode,
        exec: Exec,
    ) -> Result<Vec<BoundaryDistributions>> {
        let rows = batch.examples();
        exec.try_map(&rows, |_, ex| self.forward(ex, mode))
    }

    /// Matching vectors for `ex` in inference mode, `N × matching_width`.
    pub fn matching_vectors(&self, ex: &EncodedExample) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = Bound::bind(&mut g, &self.params.trainable);
        let t = self.trace(&mut g, &bound, ex, Mode::Inference)?;
        Ok(g.value(t.matching).clone())
    }

    /// Span loss for the gold answer and its gradient for every trainable
    /// tensor.
    pub fn loss_and_gradients(&self, ex: &EncodedExample, mode: Mode) -> Result<(Real, ParamSet)> {
        let span = ex
            .answer
            .ok_or_else(|| Error::invalid(format!("example {} has no gold span", ex.id)))?;
        let mut g = Graph::new();
        let bound = Bound::bind(&mut g, &self.params.trainable);
        let t = self.trace(&mut g, &bound, ex, mode)?;
        let loss = span_loss_var(&mut g, t.p_begin, t.p_end, span)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(Error::numeric(format!("loss for example {}", ex.id)));
        }
        let mut grads = g.backward(loss)?;
        let mut out = ParamSet::new();
        for ((name, _), &v) in self.params.trainable.iter().zip(bound.vars()) {
            out.insert(name, grads.take_or_zero(v));
        }
        Ok((value, out))
    }

    /// Loss only, without a backward pass.
    pub fn loss(&self, ex: &EncodedExample, mode: Mode) -> Result<Real> {
        let span = ex
            .answer
            .ok_or_else(|| Error::invalid(format!("example {} has no gold span", ex.id)))?;
        let mut g = Graph::new();
        let bound = Bound::bind(&mut g, &self.params.trainable);
        let t = self.trace(&mut g, &bound, ex, mode)?;
        let loss = span_loss_var(&mut g, t.p_begin, t.p_end, span)?;
        Ok(g.value(loss).item())
    }
}

/// `−ln p_begin[b] − ln p_end[e]` on the tape, with the clamp at [`LOG_FLOOR`].
pub fn span_loss_var(g: &mut Graph, p_begin: Var, p_end: Var, span: Span) -> Result<Var> {
    let n = g.value(p_begin).len();
    if span.begin < 1 || span.end > n || span.begin > span.end {
        return Err(Error::invalid(format!(
            "gold span {span:?} outside a passage of {n} tokens"
        )));
    }
    let pb = g.pick(p_begin, span.begin - 1)?;
    let pe = g.pick(p_end, span.end - 1)?;
    let lb = g.log_clamp(pb, LOG_FLOOR);
    let le = g.log_clamp(pe, LOG_FLOOR);
    let s = g.add(lb, le)?;
    Ok(g.scale(s, -1.0))
}
