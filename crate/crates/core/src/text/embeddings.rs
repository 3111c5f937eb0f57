//! Pre-trained word vectors in the GloVe text format.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::vocab::{Vocabulary, PAD, UNK};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Half-width of the uniform range used for words missing from the file.
pub const OOV_INIT_RANGE: Real = 0.05;

/// Word-embedding table aligned with a [`Vocabulary`]. Rows are never updated
/// by training.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub matrix: Tensor,
    pub trainable: bool,
}

impl EmbeddingMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }
}

#[derive(Debug, Clone)]
pub struct LoadedEmbeddings {
    pub embeddings: EmbeddingMatrix,
    /// Vocabulary rows (specials excluded) not found in the file.
    pub oov: usize,
    /// Lines skipped because their token contained a space.
    pub skipped: usize,
}

/// Reads `token f1 … f_dim` lines and copies rows for vocabulary words.
/// Exact-case matches win over case-folded ones. Missing rows are drawn
/// uniformly from `[-0.05, 0.05]` with a generator seeded by `seed`.
pub fn load_embeddings(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<LoadedEmbeddings> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(
        BufReader::new(file),
        &path.display().to_string(),
        vocab,
        dim,
        seed,
    )
}

#[derive(Clone, Copy, PartialEq)]
enum Filled {
    No,
    Folded,
    Exact,
}

pub fn read_embeddings(
    reader: impl BufRead,
    source: &str,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<LoadedEmbeddings> {
    if dim == 0 {
        return Err(Error::invalid("embedding dimension must be positive"));
    }
    let mut data = vec![0.0; vocab.len() * dim];
    let mut filled = vec![Filled::No; vocab.len()];
    let mut skipped = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(source, format!("line {}: {e}", lineno + 1)))?;
        let line = line.trim_end_matches(['\n', '\r']);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(' ').filter(|f| !f.is_empty()).collect();
        // word2vec-style "count dim" header
        if lineno == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            continue;
        }
        if fields.len() > dim + 1 && fields[1].parse::<Real>().is_err() {
            log::warn!(
                "{source}: line {} has a token containing a space; skipped",
                lineno + 1
            );
            skipped += 1;
            continue;
        }
        if fields.len() != dim + 1 {
            return Err(Error::parse(
                source,
                format!(
                    "line {}: expected {dim} values, found {}",
                    lineno + 1,
                    fields.len().saturating_sub(1)
                ),
            ));
        }
        let token = fields[0];
        let (row, kind) = match vocab.get(token) {
            Some(r) => (r, Filled::Exact),
            None => match vocab.get(&token.to_lowercase()) {
                Some(r) if filled[r] == Filled::No => (r, Filled::Folded),
                _ => continue,
            },
        };
        if row == PAD || row == UNK || filled[row] == Filled::Exact {
            continue;
        }
        for (k, f) in fields[1..].iter().enumerate() {
            data[row * dim + k] = f.parse::<Real>().map_err(|_| {
                Error::parse(source, format!("line {}: bad number `{f}`", lineno + 1))
            })?;
        }
        filled[row] = kind;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut oov = 0;
    for row in 1..vocab.len() {
        if filled[row] != Filled::No {
            continue;
        }
        if row != UNK {
            oov += 1;
        }
        for x in &mut data[row * dim..(row + 1) * dim] {
            *x = rng.random_range(-OOV_INIT_RANGE..=OOV_INIT_RANGE);
        }
    }
    Ok(LoadedEmbeddings {
        embeddings: EmbeddingMatrix {
            matrix: Tensor::from_parts(vec![vocab.len(), dim], data),
            trainable: false,
        },
        oov,
        skipped,
    })
}

/// Table with every non-padding row randomly initialised.
pub fn random_embeddings(vocab: &Vocabulary, dim: usize, seed: u64) -> EmbeddingMatrix {
    read_embeddings(std::io::empty(), "<none>", vocab, dim, seed)
        .expect("empty input cannot fail to parse")
        .embeddings
}
