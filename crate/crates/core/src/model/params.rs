use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};
use crate::text::EmbeddingMatrix;

/// Half-width of the uniform range for perspective matrices.
pub const PERSPECTIVE_INIT_RANGE: Real = 0.1;
pub const FORGET_BIAS: Real = 1.0;

/// Trainable tensors by name, in a fixed insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    tensors: IndexMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::invalid(format!("no parameter named `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.tensors.get_index_of(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.tensors.values()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    /// Total number of scalars.
    pub fn size(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Zero tensors with the same names and shapes.
    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }
}

/// Frozen word embeddings plus every trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embeddings: EmbeddingMatrix,
    pub trainable: ParamSet,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as Real).sqrt();
    uniform(rng, &[rows, cols], limit)
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], limit: Real) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..=limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape covers data")
}

fn lstm(set: &mut ParamSet, rng: &mut ChaCha8Rng, prefix: &str, input: usize, hidden: usize) {
    set.insert(format!("{prefix}.wx"), glorot(rng, input, 4 * hidden));
    set.insert(format!("{prefix}.wh"), glorot(rng, hidden, 4 * hidden));
    let mut b = vec![0.0; 4 * hidden];
    b[hidden..2 * hidden]
        .iter_mut()
        .for_each(|x| *x = FORGET_BIAS);
    set.insert(format!("{prefix}.b"), Tensor::vector(b));
}

fn feed_forward(
    set: &mut ParamSet,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    input: usize,
    hidden: usize,
) {
    set.insert(format!("{prefix}.w1"), glorot(rng, input, hidden));
    set.insert(format!("{prefix}.b1"), Tensor::zeros(&[hidden]));
    set.insert(format!("{prefix}.w2"), glorot(rng, hidden, 1));
    set.insert(format!("{prefix}.b2"), Tensor::zeros(&[1]));
}

impl ModelParams {
    /// Fresh parameters for `config`. `char_vocab_size` includes the padding
    /// and unknown rows.
    pub fn init(
        config: &ModelConfig,
        embeddings: EmbeddingMatrix,
        char_vocab_size: usize,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if embeddings.dim() != config.word_dim {
            return Err(Error::Config(format!(
                "embedding dimension {} does not match word_dim {}",
                embeddings.dim(),
                config.word_dim
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = ParamSet::new();
        let h = config.lstm_hidden;
        if config.use_char {
            set.insert(
                "char.embedding",
                glorot(&mut rng, char_vocab_size.max(2), config.char_emb_dim),
            );
            lstm(
                &mut set,
                &mut rng,
                "char.lstm",
                config.char_emb_dim,
                config.char_hidden,
            );
        }
        lstm(&mut set, &mut rng, "context.fwd", config.word_rep_dim(), h);
        lstm(&mut set, &mut rng, "context.bwd", config.word_rep_dim(), h);
        for s in config.strategies() {
            for name in s.matrices() {
                set.insert(
                    name,
                    uniform(&mut rng, &[config.perspectives, h], PERSPECTIVE_INIT_RANGE),
                );
            }
        }
        let width = config.matching_width();
        if config.use_aggregation {
            lstm(&mut set, &mut rng, "aggregate.fwd", width, h);
            lstm(&mut set, &mut rng, "aggregate.bwd", width, h);
        } else {
            set.insert("aggregate.bypass.w", glorot(&mut rng, width, 2 * h));
            set.insert("aggregate.bypass.b", Tensor::zeros(&[2 * h]));
        }
        feed_forward(
            &mut set,
            &mut rng,
            "predict.begin",
            2 * h,
            config.prediction_hidden,
        );
        feed_forward(
            &mut set,
            &mut rng,
            "predict.end",
            2 * h,
            config.prediction_hidden,
        );
        Ok(ModelParams {
            embeddings,
            trainable: set,
        })
    }

    /// Checks every tensor against the shapes `config` implies.
    pub fn validate(&self, config: &ModelConfig, char_vocab_size: usize) -> Result<()> {
        let reference = ModelParams::init(config, self.embeddings.clone(), char_vocab_size, 0)?;
        let want: Vec<(&str, &[usize])> = reference
            .trainable
            .iter()
            .map(|(k, v)| (k, v.shape()))
            .collect();
        let got: Vec<(&str, &[usize])> =
            self.trainable.iter().map(|(k, v)| (k, v.shape())).collect();
        if want != got {
            return Err(Error::Config(format!(
                "parameter layout does not match the configuration: expected {want:?}, found {got:?}"
            )));
        }
        if !self.trainable.is_finite() {
            return Err(Error::numeric("parameters"));
        }
        Ok(())
    }
}
