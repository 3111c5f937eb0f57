//! Finite-difference check of the whole network's parameter gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::dropout::DropoutKey;
use super::network::{Mode, Model};
use crate::error::Result;
use crate::tensor::{check_gradient, GradCheckReport, Real};
use crate::text::{random_embeddings, CharVocabulary, EncodedExample, Span, Vocabulary};

#[derive(Debug, Clone)]
pub struct ModelGradReport {
    pub per_param: Vec<(String, GradCheckReport)>,
    pub max_rel_error: Real,
    /// Parameter holding the worst coordinate.
    pub worst: String,
    pub tolerance: Real,
    pub passed: bool,
}

/// Compares the span-loss gradient of every trainable tensor against
/// central differences. Dropout masks, if any, are fixed by `mode`.
pub fn check_model_gradients(
    model: &Model,
    ex: &EncodedExample,
    mode: Mode,
    step: Real,
    tol: Real,
) -> Result<ModelGradReport> {
    let (_, grads) = model.loss_and_gradients(ex, mode)?;
    let mut per_param = Vec::with_capacity(grads.len());
    for (name, analytic) in grads.iter() {
        let point = model.params.trainable.get(name)?.data().to_vec();
        let value = |xs: &[Real]| -> Result<Real> {
            let mut m = model.clone();
            m.params
                .trainable
                .get_mut(name)
                .expect("name comes from the same set")
                .data_mut()
                .copy_from_slice(xs);
            m.loss(ex, mode)
        };
        let report = check_gradient(value, analytic.data(), &point, step, tol)?;
        per_param.push((name.to_owned(), report));
    }
    let (worst, max_rel_error) = per_param
        .iter()
        .map(|(n, r)| (n.clone(), r.max_rel_error))
        .fold((String::new(), 0.0), |best, cur| {
            if cur.1 > best.1 {
                cur
            } else {
                best
            }
        });
    Ok(ModelGradReport {
        passed: max_rel_error < tol,
        per_param,
        max_rel_error,
        worst,
        tolerance: tol,
    })
}

/// Checks a freshly initialised model on a random example of the given
/// lengths, once without dropout and once with fixed dropout masks.
pub fn gradient_suite(
    config: &ModelConfig,
    question_len: usize,
    passage_len: usize,
    seed: u64,
    step: Real,
    tol: Real,
) -> Result<Vec<(String, ModelGradReport)>> {
    config.validate()?;
    let words = ["a", "b", "c", "d", "e", "f", "g", "h"];
    let vocab = Vocabulary::from_tokens(words);
    let chars =
        CharVocabulary::from_chars("abcdefgh".chars().collect()).expect("distinct characters");
    let emb = random_embeddings(&vocab, config.word_dim, seed ^ 0x55);
    let model = Model::new(config.clone(), emb, vocab, chars, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seq = |len: usize| -> (Vec<usize>, Vec<Vec<usize>>) {
        let ws: Vec<usize> = (0..len)
            .map(|_| rng.random_range(2..2 + words.len()))
            .collect();
        let cs = ws
            .iter()
            .map(|&w| (0..1 + w % 3).map(|k| 2 + (w + k) % 8).collect())
            .collect();
        (ws, cs)
    };
    let (question_words, question_chars) = seq(question_len.max(1));
    let (passage_words, passage_chars) = seq(passage_len.max(1));
    let b = rng.random_range(1..=passage_words.len());
    let e = rng.random_range(b..=passage_words.len());
    let ex = EncodedExample {
        id: "gradcheck".into(),
        question_words,
        question_chars,
        passage_words,
        passage_chars,
        answer: Some(Span::new(b, e)),
    };
    let modes = [
        ("inference", Mode::Inference),
        (
            "training with dropout",
            Mode::Training(DropoutKey { seed, step: 1 }),
        ),
    ];
    modes
        .into_iter()
        .map(|(label, mode)| {
            Ok((
                label.to_owned(),
                check_model_gradients(&model, &ex, mode, step, tol)?,
            ))
        })
        .collect()
}
