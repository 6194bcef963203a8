//! Metrics, corpus statistics, experiment orchestration and report tables.

mod config;
mod experiment;
mod metrics;
mod report;
mod stats;

pub use config::{
    AugmentSection, ConfigError, DatasetSpec, DetMode, ExperimentConfig, KnowledgeMode, LearningMode, TranslatorSpec,
};
pub use experiment::{knowledge_contexts, rank_all, run_experiment, run_experiment_in, ExperimentError};
pub use metrics::{
    accuracy, gt_ranks, median_from_ranks, median_rank, recall_at_k, recall_from_ranks, MetricError, RetrievalMetrics,
    RECALL_KS,
};
pub use report::{
    emit_report_csv, emit_report_table, DatasetSizes, LossTraces, Report, ReportError, TableLayout, REASONING_COLUMNS,
    RETRIEVAL_COLUMNS,
};
pub use stats::{corpus_stats, CorpusStats, FieldLengths, Vocabulary, ENGLISH_STOPWORDS};
