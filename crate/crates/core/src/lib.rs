//! Patent relevance triage.
//!
//! Datasets of patents (title, claims, expert label) are transformed
//! according to an experiment name, scored by one or more classifiers over
//! several epochs, and evaluated with a weighted score that favours recall
//! while rewarding a short review list.
//!
//! ```
//! use triage_core::metrics::{compute_metrics, ConfusionCounts, MetricWeights};
//!
//! let counts = ConfusionCounts { tp: 9, fp: 3, tn: 87, fn_: 1 };
//! let report = compute_metrics(counts, &MetricWeights::default()).unwrap();
//! assert!((report.score_m - (4.0 * 0.9 + 0.75 + 0.97) / 6.0).abs() < 1e-12);
//! ```

pub mod aggregation;
pub mod corpus;
pub mod harness;
pub mod metrics;
pub mod preprocess;
pub mod scoring;
pub mod synth;
pub mod tokenizer;

pub use aggregation::{AggregationMode, DecisionPolicy, Decisions};
pub use corpus::{load_corpus, CorpusFormat, Dataset, Label, PatentRecord};
pub use harness::{
    run_experiment, run_suite, ExperimentConfig, ExperimentContext, ExperimentResult, ReportFormat, ResultTable,
    ScorerEntry, ScorerSpec, SuiteConfig,
};
pub use metrics::{ConfusionCounts, MetricWeights, MetricsReport};
pub use preprocess::{ChunkRecord, Example, ExperimentPlan, Transform};
pub use scoring::{BaselineScorer, EpochSnapshot, RemoteScorer, Scorer, ScorerConfig};
pub use tokenizer::{prune_vocab, PruneStats, Tokenizer};
