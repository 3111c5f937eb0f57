use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network shape, regularisation and ablation switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub word_dim: usize,
    pub char_emb_dim: usize,
    pub char_hidden: usize,
    pub lstm_hidden: usize,
    pub perspectives: usize,
    pub dropout_rate: f64,
    pub prediction_hidden: usize,
    pub use_char: bool,
    pub use_filter: bool,
    pub use_full: bool,
    pub use_max: bool,
    pub use_mean: bool,
    pub use_aggregation: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            word_dim: 300,
            char_emb_dim: 20,
            char_hidden: 100,
            lstm_hidden: 100,
            perspectives: 50,
            dropout_rate: 0.2,
            prediction_hidden: 100,
            use_char: true,
            use_filter: true,
            use_full: true,
            use_max: true,
            use_mean: true,
            use_aggregation: true,
        }
    }
}

/// The three ways a passage state is compared with the question.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Full,
    Max,
    Mean,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Full, Strategy::Max, Strategy::Mean];

    /// Names of the forward and backward perspective matrices.
    pub fn matrices(self) -> [&'static str; 2] {
        match self {
            Strategy::Full => ["match.w1", "match.w2"],
            Strategy::Max => ["match.w3", "match.w4"],
            Strategy::Mean => ["match.w5", "match.w6"],
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("word_dim", self.word_dim),
            ("lstm_hidden", self.lstm_hidden),
            ("perspectives", self.perspectives),
            ("prediction_hidden", self.prediction_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.use_char && (self.char_emb_dim == 0 || self.char_hidden == 0) {
            return Err(Error::Config(
                "char_emb_dim and char_hidden must be at least 1 when use_char is set".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate {} is outside [0, 1)",
                self.dropout_rate
            )));
        }
        if self.strategies().is_empty() {
            return Err(Error::Config(
                "at least one of use_full, use_max, use_mean must be set".into(),
            ));
        }
        Ok(())
    }

    pub fn strategies(&self) -> Vec<Strategy> {
        Strategy::ALL
            .into_iter()
            .filter(|s| match s {
                Strategy::Full => self.use_full,
                Strategy::Max => self.use_max,
                Strategy::Mean => self.use_mean,
            })
            .collect()
    }

    /// Width of a word representation row.
    pub fn word_rep_dim(&self) -> usize {
        self.word_dim + if self.use_char { self.char_hidden } else { 0 }
    }

    /// Width of a matching vector: `2l` per enabled strategy.
    pub fn matching_width(&self) -> usize {
        2 * self.perspectives * self.strategies().len()
    }

    /// Whether two configurations produce interchangeable distributions
    /// (same switches and shapes), as required for ensembling.
    pub fn compatible_with(&self, other: &ModelConfig) -> bool {
        let strip = |c: &ModelConfig| ModelConfig {
            dropout_rate: 0.0,
            ..c.clone()
        };
        strip(self) == strip(other)
    }

    /// The six ablation switches in a fixed order.
    pub fn flags(&self) -> [bool; 6] {
        [
            self.use_char,
            self.use_filter,
            self.use_full,
            self.use_max,
            self.use_mean,
            self.use_aggregation,
        ]
    }

    pub fn with_flags(&self, flags: [bool; 6]) -> ModelConfig {
        let [use_char, use_filter, use_full, use_max, use_mean, use_aggregation] = flags;
        ModelConfig {
            use_char,
            use_filter,
            use_full,
            use_max,
            use_mean,
            use_aggregation,
            ..self.clone()
        }
    }
}

pub const FLAG_NAMES: [&str; 6] = [
    "use_char",
    "use_filter",
    "use_full",
    "use_max",
    "use_mean",
    "use_aggregation",
];
