//! Knowledge-oriented transfer learning for knowledge-based video question
//! answering.
//!
//! The crate is organised around the pipeline stages:
//!
//! - [`corpus`]: sample schema, JSONL ingestion, knowledge bases, splits,
//!   visual feature files and a template-driven synthetic generator.
//! - [`det`]: gazetteer entity recognition and type tagging (appositive,
//!   mask-out, hyphen).
//! - [`augment`]: back-translation augmentation with near-duplicate removal.
//! - [`retrieval`]: lexical features, a linear scorer, sampled-softmax
//!   training, pre-train/finetune transfer and ranking.
//! - [`reasoning`]: per-candidate encoding, linear fusion and cross-entropy
//!   training for answer prediction.
//! - [`harness`]: metrics, corpus statistics, TOML-configured experiments and
//!   report tables.

pub mod augment;
pub mod corpus;
pub mod det;
pub mod harness;
pub mod reasoning;
pub mod retrieval;
pub mod text;

/// Any error raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Det(#[from] det::DetError),
    #[error(transparent)]
    Augment(#[from] augment::AugmentError),
    #[error(transparent)]
    Retrieval(#[from] retrieval::RetrievalError),
    #[error(transparent)]
    Reasoning(#[from] reasoning::ReasoningError),
    #[error(transparent)]
    Metric(#[from] harness::MetricError),
    #[error(transparent)]
    Config(#[from] harness::ConfigError),
    #[error(transparent)]
    Experiment(#[from] harness::ExperimentError),
    #[error(transparent)]
    Report(#[from] harness::ReportError),
}

pub type Result<T> = std::result::Result<T, Error>;
