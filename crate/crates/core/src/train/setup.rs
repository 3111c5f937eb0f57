use std::path::Path;

use crate::error::Result;
use crate::model::{Model, ModelConfig};
use crate::text::{
    load_embeddings, read_embeddings, synthetic_embeddings, CharVocabulary, Example, Vocabulary,
};

/// Builds vocabularies over `corpus` and a freshly initialised model.
///
/// Word vectors come from a GloVe-format file when one is given. Without a
/// file every word receives a random frozen vector in `[-1, 1]^d`, which is
/// what the synthetic corpora are meant to be paired with.
pub fn build_model(
    config: &ModelConfig,
    corpus: &[Example],
    embeddings: Option<&Path>,
    seed: u64,
) -> Result<Model> {
    config.validate()?;
    let vocab = Vocabulary::from_examples(corpus);
    let chars = CharVocabulary::from_examples(corpus);
    let table = match embeddings {
        Some(path) => {
            let loaded = load_embeddings(path, &vocab, config.word_dim, seed)?;
            log::info!(
                "embeddings: {} rows, {} not found in {}",
                loaded.embeddings.rows(),
                loaded.oov,
                path.display()
            );
            loaded.embeddings
        }
        None => {
            let text = synthetic_embeddings(corpus, config.word_dim, seed);
            read_embeddings(
                text.as_bytes(),
                "<generated>",
                &vocab,
                config.word_dim,
                seed,
            )?
            .embeddings
        }
    };
    Model::new(config.clone(), table, vocab, chars, seed)
}
