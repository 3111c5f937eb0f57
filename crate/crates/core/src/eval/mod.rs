//! Span decoding, SQuAD-style scoring, breakdown reports and ablations.

mod ablation;
mod decode;
mod evaluate;
mod metrics;
mod report;

pub use ablation::{
    layer_ablations, parse_grid, run_ablation, AblationRow, AblationTable, ModelBuilder, Setting,
};
pub use decode::decode_span;
pub use evaluate::{
    answers, evaluate, predict, probability_dumps, write_answers, write_probability_dumps,
    EvalOptions, Evaluation, ProbabilityDump, SpanPrediction, SpanScorer,
};
pub use metrics::{exact_match, f1_score, normalize_answer};
pub use report::{
    length_bucket, question_type, Bucket, EvalReport, Scored, LENGTH_BUCKETS, QUESTION_TYPES,
};
