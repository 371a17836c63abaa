//! Experiment orchestration: build the pipeline, train every scorer, keep
//! each scorer's best epoch by score M, vote across scorers and collect
//! ranked result tables.

mod config;
mod report;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{self, AggregationError, AggregationMode, DecisionPolicy};
use crate::corpus::{Dataset, Label};
use crate::metrics::{self, MetricWeights, MetricsError, MetricsReport};
use crate::preprocess::{self, Example, ExperimentPlan, PipelineError, PlanError};
use crate::scoring::{BaselineScorer, EpochSnapshot, RemoteScorer, Scorer, ScorerConfig, ScoringError, ENDPOINT_ENV};
use crate::tokenizer::{self, PruneStats, Tokenizer};

pub use config::{ConfigError, ExperimentEntry, SuiteConfig, TokenizerPaths};
pub use report::{emit_report, write_report, ReportFormat, ResultTable, Section, TableRow};

pub const MEAN_LABEL: &str = "MEAN";
pub const MEDIAN_LABEL: &str = "MEDIAN";

#[derive(Debug, thiserror::Error)]
pub enum StageError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("scorer `{scorer}`: {source}")]
    Scoring {
        scorer: String,
        #[source]
        source: ScoringError,
    },
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, thiserror::Error)]
#[error("experiment {experiment}: {source}")]
pub struct ExperimentError {
    pub experiment: String,
    #[source]
    pub source: StageError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScorerSpec {
    Baseline,
    Remote {
        /// Falls back to `TRIAGE_SCORER_ENDPOINT` when absent; the variable
        /// wins when both are set.
        #[serde(default)]
        endpoint: Option<String>,
        model: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerEntry {
    pub name: String,
    #[serde(flatten)]
    pub spec: ScorerSpec,
    /// Replaces the experiment-wide scorer config for this scorer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ScorerConfig>,
}

impl ScorerEntry {
    pub fn baseline(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            spec: ScorerSpec::Baseline,
            config: None,
        }
    }
}

/// Endpoint for a remote scorer: the environment override wins.
pub fn resolve_endpoint(configured: Option<&str>, env_override: Option<&str>) -> Option<String> {
    env_override
        .filter(|s| !s.is_empty())
        .or(configured)
        .map(str::to_string)
}

pub fn build_scorer(spec: &ScorerSpec, tokenizer: Arc<Tokenizer>) -> Result<Arc<dyn Scorer>, StageError> {
    match spec {
        ScorerSpec::Baseline => Ok(Arc::new(BaselineScorer::new(tokenizer))),
        ScorerSpec::Remote { endpoint, model } => {
            let env = std::env::var(ENDPOINT_ENV).ok();
            let endpoint = resolve_endpoint(endpoint.as_deref(), env.as_deref()).ok_or_else(|| {
                StageError::Invalid(format!("remote scorer `{model}` has no endpoint and {ENDPOINT_ENV} is unset"))
            })?;
            Ok(Arc::new(RemoteScorer::new(endpoint, model.clone())))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub plan: ExperimentPlan,
    pub scorers: Vec<ScorerEntry>,
    pub scorer_config: ScorerConfig,
    /// How chunk probabilities become patent probabilities under EX.
    pub chunk_pooling: AggregationMode,
    pub decision: DecisionPolicy,
    pub weights: MetricWeights,
    /// Drives resampling and every scorer's shuffling.
    pub seed: u64,
    /// Restrict the tokenizer to the texts of this train/test couple.
    pub prune_vocab: bool,
}

impl ExperimentConfig {
    pub fn new(plan: ExperimentPlan, scorers: Vec<ScorerEntry>) -> Self {
        Self {
            plan,
            scorers,
            scorer_config: ScorerConfig::default(),
            chunk_pooling: AggregationMode::Mean,
            decision: DecisionPolicy::default(),
            weights: MetricWeights::default(),
            seed: 0,
            prune_vocab: false,
        }
    }

    pub fn name(&self) -> String {
        self.plan.to_string()
    }

    fn validate(&self) -> Result<(), StageError> {
        if self.scorers.is_empty() {
            return Err(StageError::Invalid("no scorers configured".into()));
        }
        let mut names: Vec<&str> = self.scorers.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(StageError::Invalid(format!("duplicate scorer name `{}`", w[0])));
        }
        if names.iter().any(|n| *n == MEAN_LABEL || *n == MEDIAN_LABEL) {
            return Err(StageError::Invalid("scorer names MEAN and MEDIAN are reserved".into()));
        }
        if !self.decision.is_valid() {
            return Err(StageError::Invalid(format!("invalid decision policy {:?}", self.decision)));
        }
        self.weights.validate()?;
        Ok(())
    }

    fn scorer_config_for(&self, entry: &ScorerEntry) -> ScorerConfig {
        let mut cfg = entry.config.clone().unwrap_or_else(|| self.scorer_config.clone());
        cfg.seed = self.seed;
        cfg
    }
}

/// Inputs shared by every experiment of a suite.
#[derive(Debug, Clone)]
pub struct ExperimentContext {
    pub datasets: BTreeMap<String, Dataset>,
    pub tokenizer: Arc<Tokenizer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerResult {
    pub name: String,
    pub epochs: Vec<EpochReport>,
    pub best_epoch: usize,
    pub best: MetricsReport,
    /// Patent-level probabilities of the best epoch.
    pub best_probabilities: BTreeMap<String, f64>,
    pub flagged_for_review: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub mode: AggregationMode,
    pub report: MetricsReport,
    pub flagged_for_review: usize,
}

/// Informational only; excluded from serialized results so that reruns
/// produce identical bytes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMetadata {
    pub wall_time_ms: u128,
    pub peak_rss_kb: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub plan: ExperimentPlan,
    pub chunked: bool,
    pub chunk_pooling: AggregationMode,
    pub patents_evaluated: usize,
    pub scorers: Vec<ScorerResult>,
    pub ensembles: Vec<EnsembleResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prune_stats: Option<PruneStats>,
    #[serde(skip)]
    pub metadata: RunMetadata,
}

impl ExperimentResult {
    /// Table rows: each scorer's best epoch, then the ensembles, ranked.
    pub fn ranked_rows(&self) -> Vec<TableRow> {
        let mut rows: Vec<(String, MetricsReport)> = self
            .scorers
            .iter()
            .map(|s| {
                let label = if self.chunked {
                    format!("{}-{}", s.name, self.chunk_pooling)
                } else {
                    s.name.clone()
                };
                (label, s.best)
            })
            .collect();
        rows.extend(self.ensembles.iter().map(|e| {
            let label = match e.mode {
                AggregationMode::Mean => MEAN_LABEL,
                AggregationMode::Median => MEDIAN_LABEL,
            };
            (label.to_string(), e.report)
        }));
        metrics::rank(rows)
            .into_iter()
            .map(|(model, report)| TableRow { model, report })
            .collect()
    }
}

pub fn run_experiment(cfg: &ExperimentConfig, ctx: &ExperimentContext) -> Result<ExperimentResult, ExperimentError> {
    run_experiment_with(cfg, ctx, |entry, tokenizer| build_scorer(&entry.spec, tokenizer))
}

/// Like [`run_experiment`] but scorers come from `make_scorer`, which
/// receives the (possibly pruned) tokenizer of this experiment.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    ctx: &ExperimentContext,
    make_scorer: impl Fn(&ScorerEntry, Arc<Tokenizer>) -> Result<Arc<dyn Scorer>, StageError>,
) -> Result<ExperimentResult, ExperimentError> {
    let started = Instant::now();
    let experiment = cfg.name();
    let wrap = |source: StageError| ExperimentError {
        experiment: experiment.clone(),
        source,
    };
    cfg.validate().map_err(wrap)?;

    let pipeline = preprocess::build_pipeline(
        &cfg.plan,
        &ctx.datasets,
        cfg.seed,
        &ctx.tokenizer,
        cfg.scorer_config.max_len,
    )
    .map_err(|e| wrap(e.into()))?;
    let train = pipeline.train.examples();
    let test = pipeline.test.examples();
    let chunked = pipeline.test.is_chunked();

    let (tokenizer, prune_stats) = if cfg.prune_vocab {
        let texts: Vec<&str> = train.iter().chain(&test).map(|e| e.text.as_str()).collect();
        let (pruned, stats) = tokenizer::prune_vocab(&ctx.tokenizer, &texts);
        info!(
            "{experiment}: vocabulary {} -> {}, merges {} -> {}",
            stats.original_vocab, stats.pruned_vocab, stats.original_merges, stats.pruned_merges
        );
        (Arc::new(pruned), Some(stats))
    } else {
        (Arc::clone(&ctx.tokenizer), None)
    };

    let scorers: Vec<(&ScorerEntry, Arc<dyn Scorer>)> = cfg
        .scorers
        .iter()
        .map(|entry| make_scorer(entry, Arc::clone(&tokenizer)).map(|s| (entry, s)))
        .collect::<Result<_, _>>()
        .map_err(wrap)?;

    let scorer_results: Vec<ScorerResult> = scorers
        .par_iter()
        .map(|(entry, scorer)| {
            info!("{experiment}: training {}", entry.name);
            let snapshots = scorer
                .fit_and_score(&train, &test, &cfg.scorer_config_for(entry))
                .map_err(|source| StageError::Scoring {
                    scorer: entry.name.clone(),
                    source,
                })?;
            evaluate_scorer(&entry.name, &snapshots, &test, &pipeline.test_gold, cfg, chunked)
        })
        .collect::<Result<_, _>>()
        .map_err(wrap)?;

    let best: BTreeMap<String, BTreeMap<String, f64>> = scorer_results
        .iter()
        .map(|s| (s.name.clone(), s.best_probabilities.clone()))
        .collect();
    let ensembles = [AggregationMode::Mean, AggregationMode::Median]
        .into_iter()
        .map(|mode| {
            let probs = aggregation::ensemble(&best, mode)?;
            let (report, flagged) = evaluate(&probs, &pipeline.test_gold, cfg)?;
            Ok(EnsembleResult {
                mode,
                report,
                flagged_for_review: flagged,
            })
        })
        .collect::<Result<Vec<_>, StageError>>()
        .map_err(wrap)?;

    Ok(ExperimentResult {
        experiment: experiment.clone(),
        plan: cfg.plan.clone(),
        chunked,
        chunk_pooling: cfg.chunk_pooling,
        patents_evaluated: pipeline.test_gold.len(),
        scorers: scorer_results,
        ensembles,
        prune_stats,
        metadata: RunMetadata {
            wall_time_ms: started.elapsed().as_millis(),
            peak_rss_kb: peak_rss_kb(),
        },
    })
}

/// Collapses one snapshot to patent-level probabilities.
pub fn patent_probabilities(
    snapshot: &EpochSnapshot,
    test: &[Example],
    chunked: bool,
    pooling: AggregationMode,
) -> Result<BTreeMap<String, f64>, StageError> {
    let lookup = |e: &Example| {
        snapshot
            .probabilities
            .get(&e.key)
            .copied()
            .ok_or_else(|| StageError::Invalid(format!("epoch {} has no probability for `{}`", snapshot.epoch, e.key)))
    };
    if !chunked {
        return test.iter().map(|e| Ok((e.parent_id.clone(), lookup(e)?))).collect();
    }
    let mut per_parent: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for e in test {
        per_parent.entry(e.parent_id.clone()).or_default().push(lookup(e)?);
    }
    Ok(aggregation::pool_chunks(&per_parent, pooling)?)
}

fn evaluate(
    probs: &BTreeMap<String, f64>,
    gold: &BTreeMap<String, Label>,
    cfg: &ExperimentConfig,
) -> Result<(MetricsReport, usize), StageError> {
    let decisions = aggregation::decide(probs, cfg.decision);
    let counts = metrics::confusion(&decisions.predicted, gold)?;
    Ok((metrics::compute_metrics(counts, &cfg.weights)?, decisions.flagged_for_review.len()))
}

fn evaluate_scorer(
    name: &str,
    snapshots: &[EpochSnapshot],
    test: &[Example],
    gold: &BTreeMap<String, Label>,
    cfg: &ExperimentConfig,
    chunked: bool,
) -> Result<ScorerResult, StageError> {
    let mut epochs = Vec::with_capacity(snapshots.len());
    let mut best: Option<(usize, MetricsReport, BTreeMap<String, f64>, usize)> = None;
    for snapshot in snapshots {
        let probs = patent_probabilities(snapshot, test, chunked, cfg.chunk_pooling)?;
        let (report, flagged) = evaluate(&probs, gold, cfg)?;
        epochs.push(EpochReport {
            epoch: snapshot.epoch,
            report,
        });
        // strict comparison keeps the earliest epoch on ties
        if best.as_ref().is_none_or(|(_, b, _, _)| report.score_m > b.score_m) {
            best = Some((snapshot.epoch, report, probs, flagged));
        }
    }
    let (best_epoch, best, best_probabilities, flagged_for_review) =
        best.ok_or_else(|| StageError::Invalid(format!("scorer `{name}` returned no epochs")))?;
    Ok(ScorerResult {
        name: name.to_string(),
        epochs,
        best_epoch,
        best,
        best_probabilities,
        flagged_for_review,
    })
}

/// Outcome of one suite entry; failures are kept, not propagated.
#[derive(Debug)]
pub struct SuiteRun {
    pub table: ResultTable,
    pub results: Vec<Result<ExperimentResult, ExperimentError>>,
}

/// Runs experiments in parallel; sections keep input order.
pub fn run_suite(cfgs: &[ExperimentConfig], ctx: &ExperimentContext) -> SuiteRun {
    let results: Vec<_> = cfgs.par_iter().map(|cfg| run_experiment(cfg, ctx)).collect();
    SuiteRun {
        table: ResultTable::from_results(cfgs, &results),
        results,
    }
}

#[cfg(target_os = "linux")]
fn peak_rss_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

#[cfg(not(target_os = "linux"))]
fn peak_rss_kb() -> Option<u64> {
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_endpoint_wins() {
        assert_eq!(resolve_endpoint(Some("http://a"), Some("http://b")).unwrap(), "http://b");
        assert_eq!(resolve_endpoint(Some("http://a"), None).unwrap(), "http://a");
        assert_eq!(resolve_endpoint(Some("http://a"), Some("")).unwrap(), "http://a");
        assert!(resolve_endpoint(None, None).is_none());
    }

    #[test]
    fn scorer_entries_deserialize() {
        let json = r#"[
            {"name": "base", "kind": "baseline"},
            {"name": "bert", "kind": "remote", "model": "bert-base", "endpoint": "http://x:8000"},
            {"name": "tuned", "kind": "baseline", "config": {"learning_rate": 0.1}}
        ]"#;
        let entries: Vec<ScorerEntry> = serde_json::from_str(json).unwrap();
        assert_eq!(entries[0], ScorerEntry::baseline("base"));
        assert_eq!(
            entries[1].spec,
            ScorerSpec::Remote {
                endpoint: Some("http://x:8000".into()),
                model: "bert-base".into()
            }
        );
        assert_eq!(entries[2].config.as_ref().unwrap().learning_rate, 0.1);
        assert_eq!(entries[2].config.as_ref().unwrap().epochs, 20);
    }

    #[test]
    fn config_validation() {
        let plan: ExperimentPlan = "A1_A2".parse().unwrap();
        let mut cfg = ExperimentConfig::new(plan.clone(), vec![]);
        assert!(cfg.validate().is_err());
        cfg.scorers = vec![ScorerEntry::baseline("x"), ScorerEntry::baseline("x")];
        assert!(cfg.validate().is_err());
        cfg.scorers = vec![ScorerEntry::baseline("MEAN")];
        assert!(cfg.validate().is_err());
        cfg.scorers = vec![ScorerEntry::baseline("x")];
        assert!(cfg.validate().is_ok());
        cfg.decision.margin = 0.6;
        assert!(cfg.validate().is_err());
    }
}
