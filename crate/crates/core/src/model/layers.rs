//! Graph builders for the individual layers.
//!
//! Every function records onto a caller-owned [`Graph`] and returns handles,
//! so the same code serves inference, training and gradient checking.

use std::collections::HashMap;

use super::config::{ModelConfig, Strategy};
use super::params::ParamSet;
use crate::error::{Error, Result};
use crate::tensor::kernels;
use crate::tensor::{Graph, PoolKind, Real, Tensor, Var};
use crate::text::PAD;

/// Parameters recorded on a tape, addressable by name.
pub struct Bound<'p> {
    set: &'p ParamSet,
    vars: Vec<Var>,
}

impl<'p> Bound<'p> {
    pub fn bind(g: &mut Graph<'p>, set: &'p ParamSet) -> Self {
        let vars = set.tensors().map(|t| g.param(t)).collect();
        Bound { set, vars }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.set
            .index_of(name)
            .map(|i| self.vars[i])
            .ok_or_else(|| Error::invalid(format!("no parameter named `{name}`")))
    }

    /// Parameter handles in [`ParamSet`] order.
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

pub(crate) fn ensure_finite(g: &Graph, v: Var, layer: &str) -> Result<()> {
    if g.value(v).is_finite() {
        Ok(())
    } else {
        Err(Error::numeric(format!("{layer} layer")))
    }
}

/// One LSTM direction over `steps` time steps of `batch` rows. `x` holds the
/// inputs step-major, `(steps·batch) × d_in`. Returns each step's hidden
/// state (`batch × h`) in time order regardless of direction.
pub fn lstm_layer(
    g: &mut Graph,
    bound: &Bound,
    prefix: &str,
    x: Var,
    steps: usize,
    batch: usize,
    reverse: bool,
) -> Result<Vec<Var>> {
    let wx = bound.var(&format!("{prefix}.wx"))?;
    let wh = bound.var(&format!("{prefix}.wh"))?;
    let b = bound.var(&format!("{prefix}.b"))?;
    let hidden = g.value(wh).rows();
    let xw = g.matmul(x, wx)?;
    let proj = g.add_row(xw, b)?;
    let mut c = g.constant(Tensor::zeros(&[batch, hidden]));
    let mut h_prev: Option<Var> = None;
    let mut out = vec![None; steps];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..steps).rev())
    } else {
        Box::new(0..steps)
    };
    for t in order {
        let mut z = g.slice_rows(proj, t * batch, batch)?;
        if let Some(h) = h_prev {
            let hw = g.matmul(h, wh)?;
            z = g.add(z, hw)?;
        }
        let hc = g.lstm_cell(z, c)?;
        if !g.value(hc).is_finite() {
            return Err(Error::numeric(format!("{prefix} at step {}", t + 1)));
        }
        let h = g.slice_cols(hc, 0, hidden)?;
        c = g.slice_cols(hc, hidden, hidden)?;
        h_prev = Some(h);
        out[t] = Some(h);
    }
    Ok(out
        .into_iter()
        .map(|h| h.expect("every step visited"))
        .collect())
}

/// Character-composed vectors for a list of tokens: the final forward
/// hidden state of the character LSTM over each token. Identical tokens are
/// encoded once.
pub fn char_representation(g: &mut Graph, bound: &Bound, tokens: &[&[usize]]) -> Result<Var> {
    let mut unique: Vec<&[usize]> = Vec::new();
    let mut slot: HashMap<&[usize], usize> = HashMap::new();
    let mut which = Vec::with_capacity(tokens.len());
    for &t in tokens {
        let t: &[usize] = if t.is_empty() { &[PAD] } else { t };
        let i = *slot.entry(t).or_insert_with(|| {
            unique.push(t);
            unique.len() - 1
        });
        which.push(i);
    }
    let batch = unique.len();
    let steps = unique.iter().map(|t| t.len()).max().unwrap_or(1);
    let mut ids = vec![PAD; steps * batch];
    for (i, t) in unique.iter().enumerate() {
        for (s, &c) in t.iter().enumerate() {
            ids[s * batch + i] = c;
        }
    }
    let table = bound.var("char.embedding")?;
    let x = g.gather(table, &ids)?;
    let hs = lstm_layer(g, bound, "char.lstm", x, steps, batch, false)?;
    let stacked = g.concat_rows(&hs)?;
    let last: Vec<usize> = unique
        .iter()
        .enumerate()
        .map(|(i, t)| (t.len() - 1) * batch + i)
        .collect();
    let finals = g.gather(stacked, &last)?;
    g.gather(finals, &which)
}

/// Word-embedding rows, optionally followed by the character-composed part.
/// Question and passage are encoded together so shared tokens share work.
pub fn word_representation(
    g: &mut Graph,
    bound: &Bound,
    config: &ModelConfig,
    embedding: Var,
    sequences: [(&[usize], &[Vec<usize>]); 2],
) -> Result<[Var; 2]> {
    let words = [
        g.gather(embedding, sequences[0].0)?,
        g.gather(embedding, sequences[1].0)?,
    ];
    if !config.use_char {
        return Ok(words);
    }
    let all: Vec<&[usize]> = sequences[0]
        .1
        .iter()
        .chain(sequences[1].1)
        .map(Vec::as_slice)
        .collect();
    let chars = char_representation(g, bound, &all)?;
    let m = sequences[0].0.len();
    let n = sequences[1].0.len();
    let qc = g.slice_rows(chars, 0, m)?;
    let pc = g.slice_rows(chars, m, n)?;
    Ok([
        g.concat_cols(&[words[0], qc])?,
        g.concat_cols(&[words[1], pc])?,
    ])
}

/// `r_j = max_i cos(q_i, p_j)` over unmasked question rows.
pub fn relevancy(
    g: &mut Graph,
    question: Var,
    passage: Var,
    question_mask: &[bool],
) -> Result<Var> {
    let d = g.value(passage).cols();
    let ones = g.constant(Tensor::filled(&[1, d], 1.0));
    let sims = g.mp_cosine(passage, question, ones)?;
    let best = g.pool(sims, question_mask, PoolKind::Max)?;
    let n = g.value(passage).rows();
    g.reshape(best, &[n])
}

/// `p'_j = r_j · p_j`.
pub fn filter_passage(g: &mut Graph, passage: Var, r: Var) -> Result<Var> {
    g.scale_rows(passage, r)
}

/// Shared bidirectional context encoder; returns `(forward, backward)`
/// states, each `T × h`.
pub fn context_encode(g: &mut Graph, bound: &Bound, reps: Var) -> Result<(Var, Var)> {
    let t = g.value(reps).rows();
    let fwd = lstm_layer(g, bound, "context.fwd", reps, t, 1, false)?;
    let bwd = lstm_layer(g, bound, "context.bwd", reps, t, 1, true)?;
    Ok((g.concat_rows(&fwd)?, g.concat_rows(&bwd)?))
}

/// `m_k = cos(W_k ∘ v1, W_k ∘ v2)` for every row of `w`.
pub fn multi_perspective_match(v1: &[Real], v2: &[Real], w: &Tensor) -> Result<Vec<Real>> {
    if w.rank() != 2 || w.cols() != v1.len() || v1.len() != v2.len() {
        return Err(Error::Dimension {
            op: "multi_perspective_match",
            lhs: vec![v1.len(), v2.len()],
            rhs: w.shape().to_vec(),
        });
    }
    Ok(kernels::mp_cosine_forward(
        v1,
        v2,
        w.data(),
        1,
        1,
        w.rows(),
        v1.len(),
    ))
}

/// The same function assembled from elementwise primitives on the tape.
pub fn multi_perspective_match_graph(g: &mut Graph, v1: Var, v2: Var, w: Var) -> Result<Var> {
    let (l, d) = (g.value(w).rows(), g.value(w).cols());
    let mut ms = Vec::with_capacity(l);
    for k in 0..l {
        let wk = g.slice_rows(w, k, 1)?;
        let wk = g.reshape(wk, &[d])?;
        let a = g.mul(wk, v1)?;
        let b = g.mul(wk, v2)?;
        let c = g.cosine(a, b)?;
        ms.push(g.reshape(c, &[1])?);
    }
    g.concat_cols(&ms)
}

/// Question and passage contextual states, each `T × h`.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    pub forward: Var,
    pub backward: Var,
}

/// Matching vectors `N × 2l·(enabled strategies)`, blocks ordered
/// full, max, mean with forward before backward.
pub fn match_passage(
    g: &mut Graph,
    bound: &Bound,
    config: &ModelConfig,
    question: Encoded,
    passage: Encoded,
    question_mask: &[bool],
) -> Result<Var> {
    let first = question_mask
        .iter()
        .position(|&m| m)
        .ok_or_else(|| Error::invalid("question mask has no unmasked step"))?;
    let last = question_mask
        .iter()
        .rposition(|&m| m)
        .expect("non-empty mask");
    let n = g.value(passage.forward).rows();
    let l = config.perspectives;
    let mut blocks = Vec::with_capacity(6);
    for s in config.strategies() {
        let [wf, wb] = s.matrices();
        let dirs = [
            (passage.forward, question.forward, bound.var(wf)?, last),
            (passage.backward, question.backward, bound.var(wb)?, first),
        ];
        for (p, q, w, endpoint) in dirs {
            let block = match s {
                Strategy::Full => {
                    let q_end = g.slice_rows(q, endpoint, 1)?;
                    let sims = g.mp_cosine(p, q_end, w)?;
                    g.reshape(sims, &[n, l])?
                }
                Strategy::Max | Strategy::Mean => {
                    let kind = if s == Strategy::Max {
                        PoolKind::Max
                    } else {
                        PoolKind::Mean
                    };
                    let sims = g.mp_cosine(p, q, w)?;
                    g.pool(sims, question_mask, kind)?
                }
            };
            blocks.push(block);
        }
    }
    g.concat_cols(&blocks)
}

/// Bidirectional aggregation (`N × 2h`), or the affine bypass when the
/// aggregation layer is ablated.
pub fn aggregate(g: &mut Graph, bound: &Bound, config: &ModelConfig, matching: Var) -> Result<Var> {
    if !config.use_aggregation {
        let w = bound.var("aggregate.bypass.w")?;
        let b = bound.var("aggregate.bypass.b")?;
        let xw = g.matmul(matching, w)?;
        return g.add_row(xw, b);
    }
    let n = g.value(matching).rows();
    let fwd = lstm_layer(g, bound, "aggregate.fwd", matching, n, 1, false)?;
    let bwd = lstm_layer(g, bound, "aggregate.bwd", matching, n, 1, true)?;
    let f = g.concat_rows(&fwd)?;
    let b = g.concat_rows(&bwd)?;
    g.concat_cols(&[f, b])
}

/// Position scores from one prediction network: `tanh(A·W1 + b1)·w2 + b2`.
pub fn boundary_scores(g: &mut Graph, bound: &Bound, prefix: &str, aggregated: Var) -> Result<Var> {
    let w1 = bound.var(&format!("{prefix}.w1"))?;
    let b1 = bound.var(&format!("{prefix}.b1"))?;
    let w2 = bound.var(&format!("{prefix}.w2"))?;
    let b2 = bound.var(&format!("{prefix}.b2"))?;
    let n = g.value(aggregated).rows();
    let a = g.matmul(aggregated, w1)?;
    let a = g.add_row(a, b1)?;
    let hid = g.tanh(a);
    let s = g.matmul(hid, w2)?;
    let s = g.add_row(s, b2)?;
    g.reshape(s, &[n])
}

/// Begin and end distributions over passage positions.
pub fn predict_boundaries(
    g: &mut Graph,
    bound: &Bound,
    aggregated: Var,
    mask: &[bool],
) -> Result<(Var, Var)> {
    let sb = boundary_scores(g, bound, "predict.begin", aggregated)?;
    let se = boundary_scores(g, bound, "predict.end", aggregated)?;
    Ok((g.masked_softmax(sb, mask)?, g.masked_softmax(se, mask)?))
}
