//! Tokenization, SQuAD loading, vocabularies, embeddings and batching.

pub mod batch;
pub mod embeddings;
pub mod squad;
pub mod synthetic;
pub mod tokenize;
pub mod vocab;

pub use batch::{batch_indices, make_batches, Batch, EncodedExample, Encoder, MAX_WORD_CHARS};
pub use embeddings::{
    load_embeddings, random_embeddings, read_embeddings, EmbeddingMatrix, LoadedEmbeddings,
};
pub use squad::{
    align_answer_span, load_squad, parse_squad, Example, Span, SquadDocument, SquadSet, Unaligned,
};
pub use synthetic::{synthetic_document, synthetic_embeddings, synthetic_examples, SynthConfig};
pub use tokenize::{tokenize, Token};
pub use vocab::{CharVocabulary, Vocabulary, PAD, UNK};
